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

// Hot loops of the library. Every kernel here has a serial twin in
// reference.hpp; unit tests pin the two together and bench_kernels times them.
//
// Work is split over output rows only, so each output element is accumulated
// in the same order regardless of the thread count and results are bitwise
// reproducible.

#pragma once

#include "abc/numerics.hpp"

namespace abc::kernels
{

/// Below this many multiply-adds the kernels stay on the calling thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);

/// Row-wise stable softmax in place.
void softmax_rows(Matrix& m);

/// Bounded memory for a stack of control vectors: out = phi^T x,
/// where phi is N-by-n and x is N-by-d.
void build_memory(const Matrix& phi, const Matrix& x, Matrix& out);

/// Scores of every cached key against one query, then softmax-weighted values.
/// keys/values hold `count` valid rows. Used by the softmax decode baseline.
void cached_attention(std::span<const double> q, const Matrix& keys, const Matrix& values, std::size_t count,
                      double temperature, std::span<double> out);

int max_threads();

}  // namespace abc::kernels
