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

#include "abc/memory_core.hpp"

#include "abc/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace abc
{

bool ControlVector::all_nonnegative() const noexcept
{
    return std::all_of(weights.begin(), weights.end(), [](double w) { return w >= 0.0; });
}

Matrix TransitionOp::materialize() const
{
    return kind == TransitionKind::identity ? Matrix::identity(size) : upper_shift_matrix(size);
}

BoundedMemory BoundedMemory::zeros(std::size_t n, std::size_t d, bool with_norm_sum)
{
    BoundedMemory m;
    m.ktilde = Matrix(n, d);
    m.vtilde = Matrix(n, d);
    if (with_norm_sum)
        m.norm_sum = Vector(n, 0.0);
    m.written.assign(n, 0);
    return m;
}

BoundedMemory BoundedMemory::from_slots(Matrix ktilde, Matrix vtilde)
{
    if (ktilde.rows() != vtilde.rows() || ktilde.cols() != vtilde.cols())
        throw DomainError("BoundedMemory: ktilde and vtilde shapes differ");
    BoundedMemory m;
    m.written.assign(ktilde.rows(), 1);
    m.ktilde = std::move(ktilde);
    m.vtilde = std::move(vtilde);
    return m;
}

std::size_t BoundedMemory::written_count() const noexcept
{
    return static_cast<std::size_t>(std::count(written.begin(), written.end(), static_cast<unsigned char>(1)));
}

std::size_t BoundedMemory::state_bytes() const noexcept
{
    std::size_t floats = ktilde.size() + vtilde.size();
    if (norm_sum)
        floats += norm_sum->size();
    return floats * sizeof(double);
}

BoundedMemory build_memory(const Matrix& phi_rows, const Matrix& keys, const Matrix& values)
{
    if (phi_rows.rows() != keys.rows() || keys.rows() != values.rows())
        throw DomainError("build_memory: control, key and value counts differ");
    if (keys.cols() != values.cols())
        throw DomainError("build_memory: key and value widths differ");
    BoundedMemory mem;
    mem.ktilde = Matrix(phi_rows.cols(), keys.cols());
    mem.vtilde = Matrix(phi_rows.cols(), values.cols());
    kernels::build_memory(phi_rows, keys, mem.ktilde);
    kernels::build_memory(phi_rows, values, mem.vtilde);
    mem.written.assign(phi_rows.cols(), 0);
    for (std::size_t t = 0; t < phi_rows.rows(); ++t)
        for (std::size_t l = 0; l < phi_rows.cols(); ++l)
            if (phi_rows(t, l) != 0.0)
                mem.written[l] = 1;
    return mem;
}

BoundedMemory build_memory(std::span<const ControlVector> phis, const Matrix& keys, const Matrix& values)
{
    if (phis.empty())
        throw DomainError("build_memory: no control vectors");
    const std::size_t n = phis.front().dim();
    Matrix stacked(phis.size(), n);
    for (std::size_t t = 0; t < phis.size(); ++t)
    {
        if (phis[t].dim() != n)
            throw DomainError("build_memory: control vectors differ in dimension");
        std::copy(phis[t].weights.begin(), phis[t].weights.end(), stacked.row(t).begin());
    }
    return build_memory(stacked, keys, values);
}

void step_inplace(BoundedMemory& state, std::span<const double> phi, std::span<const double> key,
                  std::span<const double> value, TransitionKind transition)
{
    const std::size_t n = state.slots();
    const std::size_t d = state.width();
    if (phi.size() != n || key.size() != d || value.size() != state.vtilde.cols())
        throw DomainError("step: dimension mismatch");
    if (state.written.size() != n)
        state.written.assign(n, 0);

    if (transition == TransitionKind::upper_shift && n > 0)
    {
        // U M moves row i + 1 to row i and zeroes the last row.
        for (Matrix* m : {&state.ktilde, &state.vtilde})
        {
            auto flat = m->flat();
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(m->cols()), flat.end(), flat.begin());
            std::fill(flat.end() - static_cast<std::ptrdiff_t>(m->cols()), flat.end(), 0.0);
        }
        std::copy(state.written.begin() + 1, state.written.end(), state.written.begin());
        state.written.back() = 0;
        if (state.norm_sum)
        {
            auto& s = *state.norm_sum;
            std::copy(s.begin() + 1, s.end(), s.begin());
            s.back() = 0.0;
        }
    }

    for (std::size_t l = 0; l < n; ++l)
    {
        const double w = phi[l];
        if (w == 0.0)
            continue;
        state.written[l] = 1;
        auto kr = state.ktilde.row(l);
        auto vr = state.vtilde.row(l);
        for (std::size_t j = 0; j < d; ++j)
            kr[j] += w * key[j];
        for (std::size_t j = 0; j < vr.size(); ++j)
            vr[j] += w * value[j];
    }
    if (state.norm_sum)
        for (std::size_t l = 0; l < n; ++l)
            (*state.norm_sum)[l] += phi[l];
}

BoundedMemory step(const BoundedMemory& state, const ControlVector& phi, std::span<const double> key,
                   std::span<const double> value, const TransitionOp& transition)
{
    if (transition.size != state.slots())
        throw DomainError("step: transition size does not match memory slots");
    BoundedMemory next = state;
    step_inplace(next, phi.weights, key, value, transition.kind);
    return next;
}

namespace
{

Vector masked_readout(std::span<const double> query, const Matrix& keys, const Matrix& values,
                      const std::vector<unsigned char>& written, double temperature)
{
    if (query.size() != keys.cols())
        throw DomainError("readout: query width does not match memory");
    if (!(temperature > 0.0))
        throw DomainError("readout: temperature must be positive");
    const std::size_t n = keys.rows();
    Vector out(values.cols(), 0.0);

    double mx = -INFINITY;
    Vector scores(n, 0.0);
    for (std::size_t l = 0; l < n; ++l)
    {
        if (!written.empty() && !written[l])
            continue;
        scores[l] = dot(keys.row(l), query) / temperature;
        mx = std::max(mx, scores[l]);
    }
    if (mx == -INFINITY)
        return out;
    if (!std::isfinite(mx))
        throw NumericError("readout: non-finite score");

    double sum = 0.0;
    for (std::size_t l = 0; l < n; ++l)
    {
        if (!written.empty() && !written[l])
        {
            scores[l] = 0.0;
            continue;
        }
        scores[l] = std::exp(scores[l] - mx);
        sum += scores[l];
    }
    for (std::size_t l = 0; l < n; ++l)
    {
        const double p = scores[l] / sum;
        if (p == 0.0)
            continue;
        auto vr = values.row(l);
        for (std::size_t j = 0; j < out.size(); ++j)
            out[j] += p * vr[j];
    }
    return out;
}

}  // namespace

Vector readout(std::span<const double> query, const BoundedMemory& mem, double temperature)
{
    return masked_readout(query, mem.ktilde, mem.vtilde, mem.written, temperature);
}

Matrix normalize_rows(const Matrix& m, std::span<const double> norm)
{
    if (norm.size() != m.rows())
        throw DomainError("normalize_rows: normalizer length mismatch");
    Matrix out = m;
    for (std::size_t l = 0; l < m.rows(); ++l)
    {
        // Unwritten slots carry a zero row and a zero normalizer.
        const double inv = norm[l] > 0.0 ? 1.0 / norm[l] : 0.0;
        for (double& x : out.row(l))
            x *= inv;
    }
    return out;
}

Vector readout_normalized(std::span<const double> query, const BoundedMemory& mem, double temperature)
{
    if (!mem.norm_sum)
        throw DomainError("readout_normalized: memory carries no normalizer");
    if (mem.written_count() == 0)
        throw NumericError("readout_normalized: zero normalizer (no token written yet)");
    for (std::size_t l = 0; l < mem.slots(); ++l)
        if (mem.written[l] && !((*mem.norm_sum)[l] > 0.0))
            throw NumericError("readout_normalized: written slot " + std::to_string(l) + " has no positive normalizer");
    const Matrix kbar = normalize_rows(mem.ktilde, *mem.norm_sum);
    const Matrix vbar = normalize_rows(mem.vtilde, *mem.norm_sum);
    return masked_readout(query, kbar, vbar, mem.written, temperature);
}

Vector full_attention(std::span<const double> query, const Matrix& keys, const Matrix& values, double temperature)
{
    if (keys.rows() != values.rows() || keys.rows() == 0)
        throw DomainError("full_attention: key/value counts differ or are empty");
    if (query.size() != keys.cols())
        throw DomainError("full_attention: query width mismatch");
    if (!(temperature > 0.0))
        throw DomainError("full_attention: temperature must be positive");
    Vector out(values.cols());
    kernels::cached_attention(query, keys, values, keys.rows(), temperature, out);
    return out;
}

}  // namespace abc
