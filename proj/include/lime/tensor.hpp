// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Small dense f64 linear algebra and a reproducible random number generator.
//
// All reductions run left-to-right over the inner index so that results are
// bit-identical between runs. Operations that produce a non-finite entry throw
// NumericError.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lime {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    std::string shape_string() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double s);

double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(std::span<const double> v) noexcept;

/// Solves a·x = b with partial-pivot LU. Throws NumericError if a is singular.
Matrix solve(const Matrix& a, const Matrix& b);

/// Temperature softmax with max subtraction. Throws ConfigError for t <= 0.
Vector softmax(std::span<const double> logits, double temperature);
double inf_norm(std::span<const double> v) noexcept;
/// Index of the largest |v_i|; lowest index wins ties. v must be nonempty.
std::size_t argmax_abs(std::span<const double> v) noexcept;
/// Index of the largest v_i; lowest index wins ties. v must be nonempty.
std::size_t argmax(std::span<const double> v) noexcept;

/// SplitMix64 generator.
///
/// Draws are a pure function of the seed. `split()` derives an independent
/// child stream. Uniform doubles take the top 53 bits; normals use the
/// Box-Muller transform with one normal per pair of uniforms (no caching).
class Rng {
public:
    explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1).
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept;
    double normal(double mean = 0.0, double stddev = 1.0) noexcept;
    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n) noexcept;
    Rng split() noexcept;

    std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);
Matrix random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Rng& rng);
/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

} // namespace lime
