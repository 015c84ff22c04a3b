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

// Multihead attention with bounded-memory control, usable wherever softmax
// attention is: encoder self-attention, causal decoder self-attention and
// decoder cross attention.
//
// Row convention: token representations are rows, projections are applied on
// the right (Q = X Wq). Control vectors are computed once per call from the
// key/value-side input X (before projection) and shared by all heads, except
// for clustering, which groups each head's projected keys separately.
//
// Causal ABC_MLP uses the normalized-memory form: the memory accumulates raw
// activations and is divided row-wise by their running sum before every read.

#pragma once

#include "abc/memory_core.hpp"
#include "abc/numerics.hpp"
#include "abc/strategies.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace abc
{

enum class Site
{
    encoder_self,
    causal,
    cross,
};

enum class StrategyKind
{
    softmax,   ///< exact attention over every key; the baseline
    identity,  ///< bounded-memory form with phi_t = e_t, n = max_len
    linformer,
    local_to_global,
    random,
    compressive,
    cluster,
    window,
    dilated,
    mlp,
};

std::string_view to_string(Site site);
std::string_view to_string(StrategyKind kind);
std::string_view to_string(MlpActivation activation);
Site parse_site(std::string_view name);
StrategyKind parse_strategy_kind(std::string_view name);
MlpActivation parse_activation(std::string_view name);

/// Config-level description of a control strategy; learned matrices live in
/// StrategyParams.
struct StrategySpec
{
    StrategyKind kind = StrategyKind::mlp;
    std::size_t n = 32;
    MlpActivation activation = MlpActivation::exp;
    /// Tokens per slot for compressive; 0 means ceil(max_len / n).
    std::size_t compression = 0;
    /// 1-based global positions for local_to_global; empty means n evenly
    /// spaced positions starting at 1.
    std::vector<std::size_t> globals;
    std::uint64_t seed = 0;
    std::size_t cluster_iters = 10;
    /// Longest sequence the strategy must handle (linformer N_max, random
    /// draws, identity slots).
    std::size_t max_len = 128;
    /// Clamp mlp logits to +-30 before the activation (training only).
    bool clamp_logits = false;

    bool learned() const noexcept { return kind == StrategyKind::mlp || kind == StrategyKind::linformer; }
    bool bounded() const noexcept { return kind != StrategyKind::softmax; }
};

inline StrategySpec make_spec(StrategyKind kind, std::size_t n = 32)
{
    StrategySpec s;
    s.kind = kind;
    s.n = n;
    return s;
}

struct AttentionConfig
{
    std::size_t heads = 4;
    std::size_t d_model = 64;
    std::size_t d_head = 16;
    Site site = Site::encoder_self;
    StrategySpec strategy;
    /// Scores are divided by this; defaults to sqrt(d_head).
    std::optional<double> temperature;
    bool tie_phi_across_layers = true;

    double effective_temperature() const;
    /// Memory slots actually allocated (max_len for identity, 0 for softmax).
    std::size_t slots() const;
    /// Throws DomainError on inconsistent sizes or a strategy that cannot
    /// serve the site (e.g. clustering in causal attention).
    void validate() const;
};

struct LayerParams
{
    Matrix wq, wk, wv, wo;  ///< d_model-by-d_model

    static LayerParams zeros(std::size_t d_model);
    static LayerParams init(std::size_t d_model, SeededRng& rng);
};

/// Learned strategy parameters. Only the matrix the strategy uses is
/// non-empty.
struct StrategyParams
{
    Matrix w_phi;  ///< n-by-d_model (mlp)
    Matrix w_lf;   ///< n-by-max_len (linformer)

    static StrategyParams zeros_for(const AttentionConfig& cfg);
    static StrategyParams init(const AttentionConfig& cfg, SeededRng& rng);
    std::size_t parameter_count() const noexcept { return w_phi.size() + w_lf.size(); }
};

/// Control strategy for one sequence, with learned matrices bound.
/// Clustering has no sequence-independent form and is rejected here.
ControlStrategy make_control(const StrategySpec& spec, const StrategyParams& params, Site site);

namespace detail
{
struct TapeData;
}

/// Everything backward needs from one forward call. Parameters are referenced,
/// not copied, and must outlive the tape.
class GradTape
{
public:
    GradTape();
    ~GradTape();
    GradTape(GradTape&&) noexcept;
    GradTape& operator=(GradTape&&) noexcept;

    bool consumed() const noexcept { return consumed_; }
    bool empty() const noexcept { return data_ == nullptr; }

    // Used by the implementation.
    detail::TapeData& data();
    void mark_consumed() noexcept { consumed_ = true; }
    explicit GradTape(std::unique_ptr<detail::TapeData> data);

private:
    std::unique_ptr<detail::TapeData> data_;
    bool consumed_ = false;
};

struct AttentionOutput
{
    Matrix out;
    GradTape tape;
};

struct AttentionGrads
{
    Matrix d_xq;
    Matrix d_xkv;
    LayerParams d_params;
    StrategyParams d_strategy;
};

/// Batch forward. For encoder_self and causal sites pass the same matrix as
/// xq and xkv; the caller adds d_xq and d_xkv in that case.
AttentionOutput mha_forward(const Matrix& xq, const Matrix& xkv, const LayerParams& params,
                            const StrategyParams& strategy, const AttentionConfig& cfg);

/// Gradients of sum(d_out .* out) with respect to inputs and parameters.
/// A tape can be consumed once; a second call throws UsageError.
AttentionGrads mha_backward(GradTape& tape, const Matrix& d_out);

/// Recurrent state of one attention site for token-by-token decoding.
struct AttentionStream
{
    Site site = Site::causal;
    std::size_t position = 0;  ///< tokens consumed so far
    /// heads * lanes memories; the dilated pattern uses two lanes per head.
    std::vector<BoundedMemory> memories;
    /// Softmax baseline caches, one per head, grown by doubling.
    std::vector<Matrix> key_cache, value_cache;
    std::size_t cached = 0;
    /// Control strategy with its per-position tables, built once.
    std::optional<ControlStrategy> control;

    /// Bytes of live decoder state (slot matrices and normalizers, or the
    /// filled part of the key/value caches).
    std::size_t state_bytes() const noexcept;
};

/// Empty causal stream.
AttentionStream start_stream(const AttentionConfig& cfg, const StrategyParams& strategy);

/// Consumes token representation x_t and returns the attention output for it.
Vector mha_step(std::span<const double> x, const LayerParams& params, const StrategyParams& strategy,
                const AttentionConfig& cfg, AttentionStream& stream);

/// Memory over the encoder output, built once for all decode steps.
AttentionStream build_cross_stream(const Matrix& xkv, const LayerParams& params, const StrategyParams& strategy,
                                   const AttentionConfig& cfg);

/// Reads a cross-attention stream with one decoder query.
Vector mha_read(std::span<const double> xq, const LayerParams& params, const AttentionConfig& cfg,
                const AttentionStream& stream);

/// K~ assembled row by row as n independent softmax attentions, each using one
/// row of W_phi as a fixed query over the inputs X with keys K.
Matrix pseudo_query_memory(const Matrix& w_phi, const Matrix& inputs, const Matrix& keys);

}  // namespace abc
