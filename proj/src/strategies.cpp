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

#include "abc/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace abc
{

namespace
{

template <class... Ts>
struct Overloaded : Ts...
{
    using Ts::operator()...;
};

Vector basis(std::size_t n, std::size_t slot, double weight = 1.0)
{
    Vector e(n, 0.0);
    e[slot] = weight;
    return e;
}

double activate(double z, MlpActivation act)
{
    switch (act)
    {
    case MlpActivation::exp:
        return std::exp(z);
    case MlpActivation::relu:
        return z > 0.0 ? z : 0.0;
    case MlpActivation::sigmoid:
        return 1.0 / (1.0 + std::exp(-z));
    }
    return 0.0;
}

double squared_distance(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j)
    {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace

BitMatrix BitMatrix::from_assignment(std::span<const std::size_t> cluster_of_row, std::size_t clusters)
{
    BitMatrix m(cluster_of_row.size(), clusters);
    for (std::size_t i = 0; i < cluster_of_row.size(); ++i)
    {
        if (cluster_of_row[i] >= clusters)
            throw DomainError("BitMatrix: cluster index out of range");
        m.set(i, cluster_of_row[i], true);
    }
    return m;
}

std::size_t BitMatrix::column_count(std::size_t c) const noexcept
{
    std::size_t count = 0;
    for (std::size_t r = 0; r < rows_; ++r)
        count += (*this)(r, c) ? 1 : 0;
    return count;
}

void BitMatrix::validate_rows() const
{
    for (std::size_t r = 0; r < rows_; ++r)
    {
        std::size_t sum = 0;
        for (std::size_t c = 0; c < cols_; ++c)
            sum += (*this)(r, c) ? 1 : 0;
        if (sum != 1)
            throw DomainError("BitMatrix: row " + std::to_string(r) + " is not a hard assignment");
    }
}

bool BitMatrix::has_empty_column() const noexcept
{
    for (std::size_t c = 0; c < cols_; ++c)
        if (column_count(c) == 0)
            return true;
    return false;
}

RandomControl RandomControl::make(std::size_t slots, std::uint64_t seed, std::size_t max_len)
{
    if (slots == 0)
        throw DomainError("RandomControl: zero slots");
    RandomControl rc;
    rc.slots = slots;
    rc.seed = seed;
    SeededRng rng(seed);
    rc.draws.resize(max_len);
    for (auto& d : rc.draws)
        d = rng.uniform_index(slots);
    return rc;
}

std::size_t memory_slots(const ControlStrategy& s)
{
    return std::visit(Overloaded{
                          [](const LinformerControl& c) { return c.projection.rows(); },
                          [](const LocalToGlobalControl& c) { return c.globals.size(); },
                          [](const RandomControl& c) { return c.slots; },
                          [](const CompressiveControl& c) { return c.slots; },
                          [](const ClusterControl& c) { return c.membership.cols(); },
                          [](const WindowControl& c) { return c.slots; },
                          [](const DilatedControl& c) { return c.slots; },
                          [](const MlpControl& c) { return c.w_phi.rows(); },
                      },
                      s);
}

TransitionKind transition_of(const ControlStrategy& s)
{
    if (std::holds_alternative<WindowControl>(s) || std::holds_alternative<DilatedControl>(s))
        return TransitionKind::upper_shift;
    return TransitionKind::identity;
}

bool is_causal_legal(const ControlStrategy& s)
{
    if (std::holds_alternative<ClusterControl>(s))
        return false;
    if (const auto* m = std::get_if<MlpControl>(&s))
        return m->normalization == Normalization::prefix;
    return true;
}

std::string_view strategy_name(const ControlStrategy& s)
{
    return std::visit(Overloaded{
                          [](const LinformerControl&) { return std::string_view("linformer"); },
                          [](const LocalToGlobalControl&) { return std::string_view("local_to_global"); },
                          [](const RandomControl&) { return std::string_view("random"); },
                          [](const CompressiveControl&) { return std::string_view("compressive"); },
                          [](const ClusterControl&) { return std::string_view("cluster"); },
                          [](const WindowControl&) { return std::string_view("window"); },
                          [](const DilatedControl&) { return std::string_view("dilated"); },
                          [](const MlpControl&) { return std::string_view("mlp"); },
                      },
                      s);
}

Vector mlp_alpha(const Matrix& w_phi, std::span<const double> x, MlpActivation activation, bool clamp_logits)
{
    if (w_phi.cols() != x.size())
        throw DomainError("mlp: W_phi width does not match token representation");
    Vector alpha(w_phi.rows());
    for (std::size_t l = 0; l < w_phi.rows(); ++l)
    {
        double z = dot(w_phi.row(l), x);
        if (clamp_logits)
            z = std::clamp(z, -kLogitClamp, kLogitClamp);
        const double a = activate(z, activation);
        if (!std::isfinite(a))
            throw NumericError("mlp: activation overflow");
        alpha[l] = a;
    }
    return alpha;
}

std::vector<ControlVector> phi_mlp_sequence(const Matrix& inputs, const Matrix& w_phi, MlpActivation activation)
{
    const std::size_t n = w_phi.rows();
    std::vector<ControlVector> phis(inputs.rows());
    Vector total(n, 0.0);
    for (std::size_t i = 0; i < inputs.rows(); ++i)
    {
        phis[i].weights = mlp_alpha(w_phi, inputs.row(i), activation);
        for (std::size_t l = 0; l < n; ++l)
            total[l] += phis[i].weights[l];
    }
    for (auto& phi : phis)
        for (std::size_t l = 0; l < n; ++l)
            phi.weights[l] = total[l] > 0.0 ? phi.weights[l] / total[l] : 0.0;
    return phis;
}

Vector PrefixAlpha::implied_phi() const
{
    Vector phi(alpha.size());
    for (std::size_t l = 0; l < alpha.size(); ++l)
        phi[l] = running[l] > 0.0 ? alpha[l] / running[l] : 0.0;
    return phi;
}

PrefixAlpha phi_mlp_prefix(std::span<const double> x, const Matrix& w_phi, std::span<const double> running_alpha_sum,
                           MlpActivation activation)
{
    if (running_alpha_sum.size() != w_phi.rows())
        throw DomainError("phi_mlp_prefix: running sum has wrong dimension");
    PrefixAlpha out;
    out.alpha = mlp_alpha(w_phi, x, activation);
    out.running.assign(running_alpha_sum.begin(), running_alpha_sum.end());
    for (std::size_t l = 0; l < out.alpha.size(); ++l)
        out.running[l] += out.alpha[l];
    return out;
}

PhiAt phi_at(const ControlStrategy& s, std::size_t t, const Matrix* inputs, std::size_t length)
{
    if (t == 0 || t > length)
        throw DomainError("phi_at: position " + std::to_string(t) + " outside 1.." + std::to_string(length));
    const std::size_t n = memory_slots(s);
    if (n == 0)
        throw DomainError("phi_at: strategy has no memory slots");

    return std::visit(
        Overloaded{
            [&](const LinformerControl& c) -> PhiAt {
                if (t > c.projection.cols())
                    throw DomainError("phi_at: linformer position " + std::to_string(t) + " exceeds N_max " +
                                      std::to_string(c.projection.cols()));
                Vector col(n);
                for (std::size_t l = 0; l < n; ++l)
                    col[l] = c.projection(l, t - 1);
                return {ControlVector{std::move(col)}, std::nullopt};
            },
            [&](const LocalToGlobalControl& c) -> PhiAt {
                Vector phi(n, 0.0);
                auto it = std::find(c.globals.begin(), c.globals.end(), t);
                if (it != c.globals.end())
                    phi[static_cast<std::size_t>(it - c.globals.begin())] = 1.0;
                return {ControlVector{std::move(phi)}, std::nullopt};
            },
            [&](const RandomControl& c) -> PhiAt {
                if (t > c.draws.size())
                    throw DomainError("phi_at: random strategy has no draw for position " + std::to_string(t));
                return {ControlVector{basis(n, c.draws[t - 1])}, std::nullopt};
            },
            [&](const CompressiveControl& c) -> PhiAt {
                if (c.ratio == 0)
                    throw DomainError("phi_at: compression ratio must be positive");
                const std::size_t slot = (t - 1) / c.ratio;
                if (slot >= n)
                    throw DomainError("phi_at: compressive position " + std::to_string(t) + " beyond n*c");
                return {ControlVector{basis(n, slot, 1.0 / static_cast<double>(c.ratio))}, std::nullopt};
            },
            [&](const ClusterControl& c) -> PhiAt {
                if (t > c.membership.rows())
                    throw DomainError("phi_at: cluster membership shorter than position");
                Vector phi(n, 0.0);
                for (std::size_t j = 0; j < n; ++j)
                    if (c.membership(t - 1, j))
                        phi[j] = 1.0 / static_cast<double>(c.membership.column_count(j));
                return {ControlVector{std::move(phi)}, std::nullopt};
            },
            [&](const WindowControl&) -> PhiAt { return {ControlVector{basis(n, n - 1)}, std::nullopt}; },
            [&](const DilatedControl&) -> PhiAt { return {ControlVector{basis(n, n - 1)}, std::nullopt}; },
            [&](const MlpControl& c) -> PhiAt {
                if (inputs == nullptr || inputs->rows() < t)
                    throw DomainError("phi_at: mlp strategy requires token representations");
                const std::size_t upto = c.normalization == Normalization::prefix ? t : length;
                if (inputs->rows() < upto)
                    throw DomainError("phi_at: mlp sequence normalization needs all tokens");
                Vector total(n, 0.0);
                Vector alpha_t;
                for (std::size_t i = 1; i <= upto; ++i)
                {
                    Vector a = mlp_alpha(c.w_phi, inputs->row(i - 1), c.activation, c.clamp_logits);
                    for (std::size_t l = 0; l < n; ++l)
                        total[l] += a[l];
                    if (i == t)
                        alpha_t = std::move(a);
                }
                Vector phi(n);
                for (std::size_t l = 0; l < n; ++l)
                    phi[l] = total[l] > 0.0 ? alpha_t[l] / total[l] : 0.0;
                return {ControlVector{std::move(phi)}, std::move(alpha_t)};
            },
        },
        s);
}

Matrix phi_rows(const ControlStrategy& s, const Matrix* inputs, std::size_t length)
{
    const std::size_t n = memory_slots(s);
    Matrix out(length, n);
    if (const auto* m = std::get_if<MlpControl>(&s); m && m->normalization == Normalization::sequence)
    {
        // One pass over the sequence instead of re-summing per position.
        if (inputs == nullptr || inputs->rows() < length)
            throw DomainError("phi_rows: mlp strategy requires token representations");
        Vector total(n, 0.0);
        for (std::size_t i = 0; i < length; ++i)
        {
            Vector a = mlp_alpha(m->w_phi, inputs->row(i), m->activation, m->clamp_logits);
            std::copy(a.begin(), a.end(), out.row(i).begin());
            for (std::size_t l = 0; l < n; ++l)
                total[l] += a[l];
        }
        for (std::size_t i = 0; i < length; ++i)
            for (std::size_t l = 0; l < n; ++l)
                out(i, l) = total[l] > 0.0 ? out(i, l) / total[l] : 0.0;
        return out;
    }
    for (std::size_t t = 1; t <= length; ++t)
    {
        const PhiAt p = phi_at(s, t, inputs, length);
        std::copy(p.phi.weights.begin(), p.phi.weights.end(), out.row(t - 1).begin());
    }
    return out;
}

Matrix folded_phi_rows(const ControlStrategy& s, const Matrix* inputs, std::size_t length)
{
    if (std::holds_alternative<DilatedControl>(s))
        throw DomainError("folded_phi_rows: the dilated pattern keeps two memories");
    if (const auto* w = std::get_if<WindowControl>(&s))
    {
        Matrix out(length, w->slots);
        for (std::size_t t = 1; t <= length; ++t)
        {
            const std::size_t age = length - t;
            if (age < w->slots)
                out(t - 1, w->slots - 1 - age) = 1.0;
        }
        return out;
    }
    return phi_rows(s, inputs, length);
}

ClusterResult cluster_keys(const Matrix& keys, std::size_t clusters, std::size_t iters, SeededRng& rng)
{
    const std::size_t count = keys.rows();
    const std::size_t d = keys.cols();
    if (clusters == 0 || clusters > count)
        throw DomainError("cluster_assign: need 1 <= n <= N (n=" + std::to_string(clusters) +
                          ", N=" + std::to_string(count) + ")");

    // Partial Fisher-Yates for n distinct rows.
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < clusters; ++i)
        std::swap(order[i], order[i + rng.uniform_index(count - i)]);

    ClusterResult result;
    result.centroids = Matrix(clusters, d);
    for (std::size_t j = 0; j < clusters; ++j)
        std::copy(keys.row(order[j]).begin(), keys.row(order[j]).end(), result.centroids.row(j).begin());

    std::vector<std::size_t> assign(count, 0);
    auto assign_points = [&] {
        for (std::size_t i = 0; i < count; ++i)
        {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < clusters; ++j)
            {
                const double dist = squared_distance(keys.row(i), result.centroids.row(j));
                if (dist < best)
                {
                    best = dist;
                    assign[i] = j;
                }
            }
        }
    };
    auto recompute = [&] {
        std::vector<std::size_t> sizes(clusters, 0);
        result.centroids.fill(0.0);
        for (std::size_t i = 0; i < count; ++i)
        {
            ++sizes[assign[i]];
            auto c = result.centroids.row(assign[i]);
            for (std::size_t j = 0; j < d; ++j)
                c[j] += keys(i, j);
        }
        for (std::size_t j = 0; j < clusters; ++j)
            if (sizes[j] > 0)
                for (double& x : result.centroids.row(j))
                    x /= static_cast<double>(sizes[j]);
        return sizes;
    };
    auto sse = [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i)
            total += squared_distance(keys.row(i), result.centroids.row(assign[i]));
        return total;
    };

    for (std::size_t it = 0; it < std::max<std::size_t>(iters, 1); ++it)
    {
        assign_points();
        auto sizes = recompute();
        for (std::size_t j = 0; j < clusters; ++j)
        {
            if (sizes[j] != 0)
                continue;
            const auto largest =
                static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
            std::size_t far = count;
            double far_dist = -1.0;
            for (std::size_t i = 0; i < count; ++i)
            {
                if (assign[i] != largest)
                    continue;
                const double dist = squared_distance(keys.row(i), result.centroids.row(largest));
                if (dist > far_dist)
                {
                    far_dist = dist;
                    far = i;
                }
            }
            assign[far] = j;
            sizes = recompute();
        }
        result.sse_history.push_back(sse());
    }

    result.membership = BitMatrix::from_assignment(assign, clusters);
    return result;
}

BitMatrix cluster_assign(const Matrix& keys, std::size_t clusters, std::size_t iters, SeededRng& rng)
{
    return cluster_keys(keys, clusters, iters, rng).membership;
}

Matrix centroids_via_phi(const Matrix& keys, const BitMatrix& membership)
{
    if (membership.rows() != keys.rows())
        throw DomainError("centroids_via_phi: membership rows do not match keys");
    Matrix out(membership.cols(), keys.cols());
    for (std::size_t j = 0; j < membership.cols(); ++j)
    {
        const std::size_t size = membership.column_count(j);
        if (size == 0)
            throw DomainError("centroids_via_phi: cluster " + std::to_string(j) + " is empty");
        for (std::size_t i = 0; i < keys.rows(); ++i)
            if (membership(i, j))
                for (std::size_t c = 0; c < keys.cols(); ++c)
                    out(j, c) += keys(i, c);
        for (double& x : out.row(j))
            x /= static_cast<double>(size);
    }
    return out;
}

DilatedQueues DilatedQueues::zeros(std::size_t slots, std::size_t width)
{
    return {BoundedMemory::zeros(slots, width), BoundedMemory::zeros(slots, width)};
}

Parity dilated_step(DilatedQueues& queues, std::size_t t, std::span<const double> key, std::span<const double> value)
{
    if (t == 0)
        throw DomainError("dilated_step: positions are 1-based");
    const Parity parity = t % 2 == 1 ? Parity::odd : Parity::even;
    BoundedMemory& q = parity == Parity::odd ? queues.odd : queues.even;
    step_inplace(q, basis(q.slots(), q.slots() - 1), key, value, TransitionKind::upper_shift);
    return parity;
}

}  // namespace abc
