#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fiss::num {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Sizes here stay at desk scale (a few thousand rows at most), so every
/// kernel is a plain loop over contiguous storage.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);
    static Matrix column(std::span<const double> v);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return rows_ == cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    Vector col(std::size_t j) const;

    std::span<const double> entries() const noexcept { return data_; }
    std::span<double> entries() noexcept { return data_; }

    bool all_finite() const noexcept;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Basic algebra.
Matrix transpose(const Matrix& m);
Matrix multiply(const Matrix& a, const Matrix& b);
Vector multiply(const Matrix& a, std::span<const double> x);
/// aᵀ·x without forming the transpose.
Vector multiply_transposed(const Matrix& a, std::span<const double> x);
/// aᵀ·a.
Matrix gram(const Matrix& a);
/// aᵀ·diag(w)·a.
Matrix weighted_gram(const Matrix& a, std::span<const double> w);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix select_columns(const Matrix& a, std::span<const std::size_t> cols);
Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows);
double frobenius_norm(const Matrix& a);
bool is_symmetric(const Matrix& m, double rel_tol = 1e-10);
/// (m + mᵀ)/2 after checking symmetry to `rel_tol`; throws DomainError otherwise.
Matrix symmetrize(const Matrix& m, double rel_tol = 1e-10);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
Vector axpy(double a, std::span<const double> x, std::span<const double> y);

// Factorizations.

/// Lower-triangular L with L·Lᵀ = m. Throws NotPositiveDefinite on a
/// non-positive pivot.
Matrix cholesky(const Matrix& m);
/// Solves L·Lᵀ·x = rhs given the Cholesky factor.
Vector cholesky_solve(const Matrix& lower, std::span<const double> rhs);
Vector solve_spd(const Matrix& m, std::span<const double> rhs);
Matrix spd_inverse(const Matrix& m);

struct SymEigen {
    Vector values;   ///< descending
    Matrix vectors;  ///< orthonormal columns, column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEigen sym_eigen(const Matrix& m);
/// m^{-1/2} for symmetric positive-definite m.
Matrix spd_inverse_sqrt(const Matrix& m);

// Special functions.

double log_gamma(double x);
double normal_cdf(double x);
double normal_quantile(double p);
double chisq_cdf(double x, double df);
double chisq_quantile(double p, double df);
double t_cdf(double x, double df);
double t_quantile(double p, double df);

}  // namespace fiss::num
