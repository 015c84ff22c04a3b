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

#include "abc/kernels.hpp"

#include <algorithm>
#include <cmath>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace abc::kernels
{

namespace
{

using Index = std::ptrdiff_t;

bool worth_parallel(std::size_t work)
{
    return work >= kParallelThreshold;
}

}  // namespace

int max_threads()
{
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void matmul(const Matrix& a, const Matrix& b, Matrix& out)
{
    const Index m = static_cast<Index>(a.rows());
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    const double* bp = b.flat().data();

#pragma omp parallel for schedule(static) if (worth_parallel(a.rows() * k * n))
    for (Index i = 0; i < m; ++i)
    {
        double* o = out.row(static_cast<std::size_t>(i)).data();
        std::fill(o, o + n, 0.0);
        const double* ar = a.row(static_cast<std::size_t>(i)).data();
        for (std::size_t p = 0; p < k; ++p)
        {
            const double s = ar[p];
            const double* br = bp + p * n;
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j)
                o[j] += s * br[j];
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out)
{
    // out[i][j] = sum_p a[p][i] * b[p][j]
    const Index m = static_cast<Index>(a.cols());
    const std::size_t k = a.rows();
    const std::size_t n = b.cols();

#pragma omp parallel for schedule(static) if (worth_parallel(a.cols() * k * n))
    for (Index i = 0; i < m; ++i)
    {
        double* o = out.row(static_cast<std::size_t>(i)).data();
        std::fill(o, o + n, 0.0);
        for (std::size_t p = 0; p < k; ++p)
        {
            const double s = a(p, static_cast<std::size_t>(i));
            if (s == 0.0)
                continue;
            const double* br = b.row(p).data();
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j)
                o[j] += s * br[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out)
{
    const Index m = static_cast<Index>(a.rows());
    const std::size_t k = a.cols();
    const std::size_t n = b.rows();

#pragma omp parallel for schedule(static) if (worth_parallel(a.rows() * k * n))
    for (Index i = 0; i < m; ++i)
    {
        const double* ar = a.row(static_cast<std::size_t>(i)).data();
        double* o = out.row(static_cast<std::size_t>(i)).data();
        for (std::size_t j = 0; j < n; ++j)
        {
            const double* br = b.row(j).data();
            double s = 0.0;
#pragma omp simd reduction(+ : s)
            for (std::size_t p = 0; p < k; ++p)
                s += ar[p] * br[p];
            o[j] = s;
        }
    }
}

void softmax_rows(Matrix& m)
{
    const Index rows = static_cast<Index>(m.rows());
    const std::size_t cols = m.cols();
#pragma omp parallel for schedule(static) if (worth_parallel(m.size() * 16))
    for (Index i = 0; i < rows; ++i)
    {
        auto r = m.row(static_cast<std::size_t>(i));
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
        {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < cols; ++j)
            r[j] *= inv;
    }
}

void build_memory(const Matrix& phi, const Matrix& x, Matrix& out)
{
    matmul_tn(phi, x, out);
}

void cached_attention(std::span<const double> q, const Matrix& keys, const Matrix& values, std::size_t count,
                      double temperature, std::span<double> out)
{
    const std::size_t d = q.size();
    const std::size_t dv = values.cols();
    std::vector<double> scores(count);
    const double inv_t = 1.0 / temperature;
    const Index c = static_cast<Index>(count);

#pragma omp parallel for schedule(static) if (worth_parallel(count * d))
    for (Index i = 0; i < c; ++i)
    {
        const double* kr = keys.row(static_cast<std::size_t>(i)).data();
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t j = 0; j < d; ++j)
            s += kr[j] * q[j];
        scores[static_cast<std::size_t>(i)] = s * inv_t;
    }

    const double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores)
    {
        s = std::exp(s - mx);
        sum += s;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < count; ++i)
    {
        const double w = scores[i] / sum;
        const double* vr = values.row(i).data();
#pragma omp simd
        for (std::size_t j = 0; j < dv; ++j)
            out[j] += w * vr[j];
    }
}

}  // namespace abc::kernels
