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

#include "abc/numerics.hpp"

#include "abc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace abc
{

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data))
{
    if (data_.size() != rows * cols)
        throw DomainError("Matrix: data length does not match rows*cols");
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
{
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows)
    {
        if (row.size() != c)
            throw DomainError("Matrix::from_rows: ragged rows");
        std::copy(row.begin(), row.end(), m.row(i++).begin());
    }
    return m;
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

Matrix Matrix::column(std::span<const double> x)
{
    return Matrix(x.size(), 1, std::vector<double>(x.begin(), x.end()));
}

Matrix Matrix::row_vector(std::span<const double> x)
{
    return Matrix(1, x.size(), std::vector<double>(x.begin(), x.end()));
}

Vector Matrix::row_copy(std::size_t r) const
{
    auto s = row(r);
    return Vector(s.begin(), s.end());
}

Matrix Matrix::transposed() const
{
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j)
            t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::col_slice(std::size_t begin, std::size_t count) const
{
    if (begin + count > cols_)
        throw DomainError("Matrix::col_slice: out of range");
    Matrix out(rows_, count);
    for (std::size_t i = 0; i < rows_; ++i)
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * cols_ + begin), count, out.row(i).begin());
    return out;
}

void Matrix::set_col_slice(std::size_t begin, const Matrix& block)
{
    if (block.rows() != rows_ || begin + block.cols() > cols_)
        throw DomainError("Matrix::set_col_slice: shape mismatch");
    for (std::size_t i = 0; i < rows_; ++i)
        std::copy(block.row(i).begin(), block.row(i).end(), row(i).begin() + static_cast<std::ptrdiff_t>(begin));
}

Matrix Matrix::row_slice(std::size_t begin, std::size_t count) const
{
    if (begin + count > rows_)
        throw DomainError("Matrix::row_slice: out of range");
    auto first = data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_);
    return Matrix(count, cols_, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * cols_)));
}

void Matrix::fill(double value) noexcept
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Matrix::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix& Matrix::operator+=(const Matrix& other)
{
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw DomainError("Matrix +=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other)
{
    if (rows_ != other.rows_ || cols_ != other.cols_)
        throw DomainError("Matrix -=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept
{
    for (double& x : data_)
        x *= s;
    return *this;
}

Matrix operator+(Matrix a, const Matrix& b)
{
    a += b;
    return a;
}

Matrix operator-(Matrix a, const Matrix& b)
{
    a -= b;
    return a;
}

Matrix operator*(Matrix a, double s)
{
    a *= s;
    return a;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DomainError("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        const double d = std::abs(a[i] - b[i]);
        if (std::isnan(d))
            return d;
        m = std::max(m, d);
    }
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DomainError("max_abs_diff: shape mismatch");
    return max_abs_diff(a.flat(), b.flat());
}

double max_abs(std::span<const double> a)
{
    double m = 0.0;
    for (double x : a)
        m = std::max(m, std::abs(x));
    return m;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size())
        throw DomainError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

Vector softmax(std::span<const double> v)
{
    if (v.empty())
        throw DomainError("softmax: empty vector");
    const double mx = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(mx))
        throw NumericError("softmax: non-finite input");
    Vector out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
    {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (double& x : out)
        x /= sum;
    return out;
}

Matrix outer(std::span<const double> x, std::span<const double> y)
{
    if (x.empty() || y.empty())
        throw DomainError("outer: empty operand");
    Matrix m(x.size(), y.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j)
            m(i, j) = x[i] * y[j];
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows())
        throw DomainError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.rows()) + ")");
    Matrix out(a.rows(), b.cols());
    kernels::matmul(a, b, out);
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows())
        throw DomainError("matmul_tn: row counts differ");
    Matrix out(a.cols(), b.cols());
    kernels::matmul_tn(a, b, out);
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.cols())
        throw DomainError("matmul_nt: column counts differ");
    Matrix out(a.rows(), b.rows());
    kernels::matmul_nt(a, b, out);
    return out;
}

Vector matvec(const Matrix& m, std::span<const double> v)
{
    if (m.cols() != v.size())
        throw DomainError("matvec: dimension mismatch");
    Vector out(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        out[i] = dot(m.row(i), v);
    return out;
}

Vector matvec_t(const Matrix& m, std::span<const double> v)
{
    if (m.rows() != v.size())
        throw DomainError("matvec_t: dimension mismatch");
    Vector out(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
    {
        const double s = v[i];
        if (s == 0.0)
            continue;
        auto r = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j)
            out[j] += s * r[j];
    }
    return out;
}

Matrix upper_shift_matrix(std::size_t n)
{
    Matrix u(n, n);
    for (std::size_t i = 0; i + 1 < n; ++i)
        u(i, i + 1) = 1.0;
    return u;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h)
{
    if (!(h > 0.0))
        throw DomainError("finite_diff_grad: step must be positive");
    Vector grad(x.size());
    Vector probe = x;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        probe[i] = x[i] + h;
        const double plus = f(probe);
        probe[i] = x[i] - h;
        const double minus = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(plus) || !std::isfinite(minus))
            throw NumericError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
        grad[i] = (plus - minus) / (2.0 * h);
    }
    return grad;
}

double SeededRng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::normal()
{
    if (has_spare_)
    {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0)
        u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::size_t SeededRng::uniform_index(std::size_t n)
{
    if (n == 0)
        throw DomainError("uniform_index: empty range");
    const std::uint64_t range = n;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % range);
    std::uint64_t x = engine_();
    while (x >= limit)
        x = engine_();
    return static_cast<std::size_t>(x % range);
}

Matrix SeededRng::normal_matrix(std::size_t rows, std::size_t cols, double stddev)
{
    Matrix m(rows, cols);
    for (double& x : m.flat())
        x = stddev * normal();
    return m;
}

Matrix SeededRng::uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi)
{
    Matrix m(rows, cols);
    for (double& x : m.flat())
        x = uniform(lo, hi);
    return m;
}

Vector SeededRng::uniform_vector(std::size_t dim, double lo, double hi)
{
    Vector v(dim);
    for (double& x : v)
        x = uniform(lo, hi);
    return v;
}

}  // namespace abc
