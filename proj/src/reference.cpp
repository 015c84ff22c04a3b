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

#include "abc/reference.hpp"

#include <cmath>

namespace abc::reference
{

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw DomainError("reference::matmul: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j)
        {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k)
                s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    return reference::matmul(a.transposed(), b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b)
{
    return reference::matmul(a, b.transposed());
}

void softmax_rows(Matrix& m)
{
    for (std::size_t i = 0; i < m.rows(); ++i)
    {
        double mx = m(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j)
            mx = std::max(mx, m(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j)
            sum += std::exp(m(i, j) - mx);
        for (std::size_t j = 0; j < m.cols(); ++j)
            m(i, j) = std::exp(m(i, j) - mx) / sum;
    }
}

Matrix build_memory(const Matrix& phi, const Matrix& x)
{
    Matrix out(phi.cols(), x.cols());
    for (std::size_t t = 0; t < phi.rows(); ++t)
        for (std::size_t l = 0; l < phi.cols(); ++l)
            for (std::size_t j = 0; j < x.cols(); ++j)
                out(l, j) += phi(t, l) * x(t, j);
    return out;
}

Vector cached_attention(std::span<const double> q, const Matrix& keys, const Matrix& values, std::size_t count,
                        double temperature)
{
    Vector scores(count);
    for (std::size_t i = 0; i < count; ++i)
    {
        double s = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j)
            s += keys(i, j) * q[j];
        scores[i] = s / temperature;
    }
    const Vector p = softmax(scores);
    Vector out(values.cols(), 0.0);
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < values.cols(); ++j)
            out[j] += p[i] * values(i, j);
    return out;
}

}  // namespace abc::reference
