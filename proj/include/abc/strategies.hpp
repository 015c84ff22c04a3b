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

// Control strategies: how each token's key/value is routed into the n memory
// slots. Positions are 1-based throughout this header, matching the usual
// statement of the strategies (token t, slot l in 1..n); the returned vectors
// are of course 0-indexed.

#pragma once

#include "abc/memory_core.hpp"
#include "abc/numerics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace abc
{

/// Hard N-by-n assignment matrix, exactly one set bit per row.
class BitMatrix
{
public:
    BitMatrix() = default;
    BitMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), bits_(rows * cols, 0) {}
    /// One cluster index (0-based) per row.
    static BitMatrix from_assignment(std::span<const std::size_t> cluster_of_row, std::size_t clusters);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool operator()(std::size_t r, std::size_t c) const noexcept { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool on) noexcept { bits_[r * cols_ + c] = on ? 1 : 0; }

    std::size_t column_count(std::size_t c) const noexcept;
    /// Throws DomainError unless every row sums to one.
    void validate_rows() const;
    bool has_empty_column() const noexcept;

    friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<unsigned char> bits_;
};

enum class MlpActivation
{
    exp,
    relu,
    sigmoid,
};

enum class Normalization
{
    sequence,
    prefix,
};

/// Logit clamp applied before the activation in the training path.
inline constexpr double kLogitClamp = 30.0;

struct LinformerControl
{
    Matrix projection;  ///< n-by-N_max; column t is the control vector of token t
};

struct LocalToGlobalControl
{
    std::vector<std::size_t> globals;  ///< 1-based positions; slot i holds the i-th one
};

struct RandomControl
{
    std::size_t slots = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> draws;  ///< draws[t - 1] = slot (0-based) of token t

    static RandomControl make(std::size_t slots, std::uint64_t seed, std::size_t max_len);
};

struct CompressiveControl
{
    std::size_t slots = 0;
    std::size_t ratio = 1;  ///< c = N / n tokens mean-pooled per slot
};

struct ClusterControl
{
    BitMatrix membership;
};

struct WindowControl
{
    std::size_t slots = 0;
};

struct DilatedControl
{
    std::size_t slots = 0;
};

struct MlpControl
{
    Matrix w_phi;  ///< n-by-d_model
    Normalization normalization = Normalization::sequence;
    MlpActivation activation = MlpActivation::exp;
    bool clamp_logits = false;
};

using ControlStrategy = std::variant<LinformerControl, LocalToGlobalControl, RandomControl, CompressiveControl,
                                     ClusterControl, WindowControl, DilatedControl, MlpControl>;

std::size_t memory_slots(const ControlStrategy& s);
TransitionKind transition_of(const ControlStrategy& s);
/// True when the control vector of token t never depends on tokens after t.
bool is_causal_legal(const ControlStrategy& s);
std::string_view strategy_name(const ControlStrategy& s);

struct PhiAt
{
    ControlVector phi;
    /// Raw activations, for the mlp strategy only.
    std::optional<Vector> alpha;
};

/// Control vector of token t (1-based) in a sequence of `length` tokens.
/// `inputs` holds the token representations as rows and is required for mlp;
/// prefix normalization reads only rows 1..t of it.
PhiAt phi_at(const ControlStrategy& s, std::size_t t, const Matrix* inputs, std::size_t length);

/// Stacked control vectors (length-by-n) for a whole sequence.
Matrix phi_rows(const ControlStrategy& s, const Matrix* inputs, std::size_t length);

/// Control rows whose plain sum reproduces the memory left after folding the
/// strategy's recurrence (including its transition) over all `length` tokens.
/// Equal to phi_rows for identity-transition strategies; for the window, token
/// t lands in slot n - (length - t). Not defined for the dilated pattern,
/// which keeps two memories.
Matrix folded_phi_rows(const ControlStrategy& s, const Matrix* inputs, std::size_t length);

struct ClusterResult
{
    BitMatrix membership;
    Matrix centroids;
    /// Within-cluster sum of squared distances after every Lloyd iteration.
    std::vector<double> sse_history;
};

/// Hard k-means over the rows of keys: init from n distinct sampled rows,
/// `iters` Lloyd steps, empty clusters refilled with the farthest point of the
/// largest cluster.
ClusterResult cluster_keys(const Matrix& keys, std::size_t clusters, std::size_t iters, SeededRng& rng);
BitMatrix cluster_assign(const Matrix& keys, std::size_t clusters, std::size_t iters, SeededRng& rng);

/// Row j = mean of the keys assigned to cluster j.
Matrix centroids_via_phi(const Matrix& keys, const BitMatrix& membership);

/// Two FIFO queues for the dilated pattern; odd positions write (and read)
/// the odd queue, even positions the even queue.
struct DilatedQueues
{
    BoundedMemory odd;
    BoundedMemory even;

    static DilatedQueues zeros(std::size_t slots, std::size_t width);
    const BoundedMemory& active(std::size_t t) const noexcept { return t % 2 == 1 ? odd : even; }
};

enum class Parity
{
    odd,
    even,
};

/// Pushes (k_t, v_t) into the queue matching t's parity; returns that parity.
Parity dilated_step(DilatedQueues& queues, std::size_t t, std::span<const double> key, std::span<const double> value);

/// Elementwise activation of W_phi x.
Vector mlp_alpha(const Matrix& w_phi, std::span<const double> x, MlpActivation activation = MlpActivation::exp,
                 bool clamp_logits = false);

/// alpha_i = act(W_phi x_i), phi_i = alpha_i / sum_j alpha_j per slot.
std::vector<ControlVector> phi_mlp_sequence(const Matrix& inputs, const Matrix& w_phi,
                                            MlpActivation activation = MlpActivation::exp);

struct PrefixAlpha
{
    Vector alpha;    ///< raw activation of the current token
    Vector running;  ///< sum of alpha over positions 1..t
    /// alpha / running: the control vector this token would get if the
    /// sequence ended here.
    Vector implied_phi() const;
};

PrefixAlpha phi_mlp_prefix(std::span<const double> x, const Matrix& w_phi, std::span<const double> running_alpha_sum,
                           MlpActivation activation = MlpActivation::exp);

}  // namespace abc
