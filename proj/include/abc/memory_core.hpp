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

// Bounded-memory attention: a fixed number of slots n receives every
// key/value pair, weighted by a per-token control vector, and queries read
// the n slots with ordinary softmax attention.
//
//   ktilde = sum_i phi_i (x) k_i          (batch construction)
//   ktilde_{t+1} = T ktilde_t + phi (x) k  (recurrent form, T = I or U)
//   out = vtilde^T softmax(ktilde q / temperature)
//
// Slots that have never received a nonzero control weight are excluded from
// the readout softmax. A slot with an all-zero row would otherwise score 0 and
// still take probability mass. With every slot written this is exactly the
// unmasked formula above.

#pragma once

#include "abc/numerics.hpp"

#include <optional>
#include <span>
#include <vector>

namespace abc
{

/// Slot weights for one token.
struct ControlVector
{
    Vector weights;

    std::size_t dim() const noexcept { return weights.size(); }
    bool all_nonnegative() const noexcept;
};

enum class TransitionKind
{
    identity,
    upper_shift,
};

/// Left-multiplied onto the memory before each write.
struct TransitionOp
{
    TransitionKind kind = TransitionKind::identity;
    std::size_t size = 0;

    static TransitionOp identity(std::size_t n) { return {TransitionKind::identity, n}; }
    static TransitionOp upper_shift(std::size_t n) { return {TransitionKind::upper_shift, n}; }

    /// Dense n-by-n form (U[i][j] = 1 iff j = i + 1 for upper_shift).
    Matrix materialize() const;
};

struct BoundedMemory
{
    Matrix ktilde;
    Matrix vtilde;
    /// Running per-slot sum of raw control weights; present only for the
    /// normalized-memory readout.
    std::optional<Vector> norm_sum;
    /// written[l] != 0 once slot l has received a nonzero control weight.
    /// Moves with the rows under the transition.
    std::vector<unsigned char> written;

    /// Empty memory with n slots of width d.
    static BoundedMemory zeros(std::size_t n, std::size_t d, bool with_norm_sum = false);
    /// Wraps explicit slot matrices; every slot counts as written.
    static BoundedMemory from_slots(Matrix ktilde, Matrix vtilde);

    std::size_t slots() const noexcept { return ktilde.rows(); }
    std::size_t width() const noexcept { return ktilde.cols(); }
    std::size_t written_count() const noexcept;
    /// Bytes held by the slot matrices and normalizer.
    std::size_t state_bytes() const noexcept;
};

/// K~ = sum_i phi_i (x) K[i], V~ likewise. phis.size() must equal K.rows().
BoundedMemory build_memory(std::span<const ControlVector> phis, const Matrix& keys, const Matrix& values);

/// Same, with the control vectors stacked as the rows of an N-by-n matrix.
BoundedMemory build_memory(const Matrix& phi_rows, const Matrix& keys, const Matrix& values);

/// One recurrent update: new = T old + phi (x) k, likewise for v.
/// When the state carries a norm_sum the control weights are taken to be raw
/// (unnormalized) and are added to it.
BoundedMemory step(const BoundedMemory& state, const ControlVector& phi, std::span<const double> key,
                   std::span<const double> value, const TransitionOp& transition);

/// In-place variant of step used by streaming decoders.
void step_inplace(BoundedMemory& state, std::span<const double> phi, std::span<const double> key,
                  std::span<const double> value, TransitionKind transition);

/// vtilde^T softmax(ktilde q / temperature) over written slots.
/// Returns zeros when no slot has been written.
Vector readout(std::span<const double> query, const BoundedMemory& mem, double temperature = 1.0);

/// Readout against the normalized memory K~ / norm_sum, V~ / norm_sum (row-wise).
/// Throws NumericError when nothing has been written yet or a written slot
/// has a non-positive normalizer.
Vector readout_normalized(std::span<const double> query, const BoundedMemory& mem, double temperature = 1.0);

/// Row l of the matrix divided by norm[l]; rows with norm[l] == 0 become zero.
Matrix normalize_rows(const Matrix& m, std::span<const double> norm);

/// Exact softmax attention: V^T softmax(K q / temperature).
Vector full_attention(std::span<const double> query, const Matrix& keys, const Matrix& values,
                      double temperature = 1.0);

}  // namespace abc
