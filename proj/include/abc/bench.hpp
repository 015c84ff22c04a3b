// ----------------------------------------------------------------------------
// Copyright 2026 The ABC Attention Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

// Decode-time latency and state-size measurements for the decoder-only toy
// model, one cell per (strategy, N, n).

#pragma once

#include "abc/model.hpp"

#include <string>
#include <vector>

namespace abc
{

struct BenchSpec
{
    std::vector<StrategyKind> strategies{StrategyKind::softmax, StrategyKind::mlp, StrategyKind::window};
    std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096};  ///< sorted, ascending
    std::vector<std::size_t> ns{32};  ///< ignored for the softmax baseline
    std::size_t batch = 16;
    std::size_t repetitions = 5;
    std::size_t warmup = 1;
    bool parallel = false;  ///< shard cells across OpenMP threads
    /// Model shape. Kind, causal strategy and max_positions are set per cell.
    ToyModelConfig model;

    void validate() const;
};

struct BenchRecord
{
    StrategyKind strategy = StrategyKind::softmax;
    std::size_t N = 0;
    std::size_t n = 0;  ///< 0 for softmax
    std::size_t batch = 0;
    double latency_median_s = 0.0;  ///< one decoding step of the whole batch
    double latency_p90_s = 0.0;
    std::size_t state_bytes = 0;  ///< decoder state of one sequence after N tokens
    double wall_s = 0.0;          ///< whole cell, setup and warmup included
    bool failed = false;          ///< latencies are NaN when set
};

/// Greedy streaming decode of N tokens from BOS for every cell. Allocation
/// failures and non-finite logits mark the cell failed; the run continues.
std::vector<BenchRecord> run_decode_bench(const BenchSpec& spec);

/// Decoder state bytes after N tokens: heads x lanes x (2 n d_head [+ n]) x 8
/// per layer for bounded memories, 2 N d_head x 8 per head and layer for the
/// softmax cache.
std::size_t analytic_state_bytes(const ToyModelConfig& cfg, std::size_t N);

/// Decodes N tokens with `base` (its causal n replaced by `n`) and returns the
/// state size, after checking it against both the analytic count and the
/// sizes actually held by the streams. A mismatch throws std::logic_error.
std::size_t run_memory_audit(const ToyModelConfig& base, std::size_t N, std::size_t n);

/// Header `strategy,N,n,batch,latency_median_s,latency_p90_s,state_bytes,wall_s`,
/// rows sorted by (strategy, n, N). Zero records is a DomainError and writes
/// nothing; an unwritable path is an IoError.
void emit_csv(std::vector<BenchRecord> records, const std::string& path);
std::vector<BenchRecord> parse_csv(const std::string& path);

/// Fixed-width table for standard output.
std::string format_summary(const std::vector<BenchRecord>& records);

}  // namespace abc
