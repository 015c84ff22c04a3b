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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace abc
{

/// Shape or precondition violation (bad dimensions, out-of-range position).
class DomainError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite value produced or consumed by a numeric routine.
class NumericError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// API misuse, e.g. running backward twice on the same tape.
class UsageError : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix
{
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> x);
    static Matrix row_vector(std::span<const double> x);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> flat() noexcept { return data_; }
    std::span<const double> flat() const noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    Vector row_copy(std::size_t r) const;
    Matrix transposed() const;
    /// Columns [begin, begin + count) as a new matrix.
    Matrix col_slice(std::size_t begin, std::size_t count) const;
    void set_col_slice(std::size_t begin, const Matrix& block);
    /// Rows [begin, begin + count) as a new matrix.
    Matrix row_slice(std::size_t begin, std::size_t count) const;

    void fill(double value) noexcept;
    bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> a);
double dot(std::span<const double> a, std::span<const double> b);

/// Numerically stable softmax (max subtraction). Throws DomainError on empty input.
Vector softmax(std::span<const double> v);

/// [x ⊗ y]_{ij} = x_i y_j
Matrix outer(std::span<const double> x, std::span<const double> y);

/// Standard product; dispatches to the OpenMP kernel.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a b^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// m v, with v a column.
Vector matvec(const Matrix& m, std::span<const double> v);
/// m^T v
Vector matvec_t(const Matrix& m, std::span<const double> v);

/// n-by-n upper shift: U[i][j] = 1 iff j = i + 1.
Matrix upper_shift_matrix(std::size_t n);

/// Central-difference gradient of f at x. Throws NumericError if f is not finite.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6);

/// Deterministic random stream backed by std::mt19937_64.
///
/// Only the raw 64-bit engine output is used; the real and integer
/// transforms below are implemented here so that the sequence does not depend
/// on a standard library's distribution implementation.
class SeededRng
{
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal();
    /// Uniform over {0, ..., n - 1} by rejection.
    std::size_t uniform_index(std::size_t n);

    Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev);
    Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);
    Vector uniform_vector(std::size_t dim, double lo, double hi);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace abc
