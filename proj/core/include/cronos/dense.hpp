#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cronos {

/// Dense row-major matrix of doubles. Only what the sketching and
/// factorization steps need; not a general BLAS replacement.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<double> col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> values);

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Thrown by thin_qr when a diagonal factor entry collapses.
class RankDeficientError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown by cholesky on a non-positive pivot ("shift too small").
class NotPositiveDefiniteError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iterative eigen/SVD sweep hits its iteration cap.
class NoConvergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Vector helpers (std::vector<double> is the vector type throughout).

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
std::vector<double> add(std::span<const double> a, std::span<const double> b);
std::vector<double> sub(std::span<const double> a, std::span<const double> b);
std::vector<double> scaled(double alpha, std::span<const double> a);

// ---------------------------------------------------------------------------
// Products

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// aᵀ x
std::vector<double> matvec_t(const Matrix& a, std::span<const double> x);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scaled(double alpha, const Matrix& a);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);

// ---------------------------------------------------------------------------
// Factorizations

/// Householder thin QR; returns the explicit orthonormal factor (same shape
/// as a). Requires rows >= cols. Throws RankDeficientError when
/// |R_jj| < 1e-12 * ||a||_F.
Matrix thin_qr(const Matrix& a);

/// Lower-triangular L with L Lᵀ = s. Only the lower triangle of s is read.
Matrix cholesky(const Matrix& s);

enum class Triangle { Lower, Upper };

/// Solves T X = B for triangular T.
Matrix triangular_solve(const Matrix& t, Triangle tri, const Matrix& b);

struct SymEig {
  std::vector<double> values;  ///< descending
  Matrix vectors;              ///< column k pairs with values[k]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEig sym_eig(const Matrix& s, int max_sweeps = 100);

struct ThinSvd {
  Matrix u;                    ///< rows x k, orthonormal columns
  std::vector<double> sigma;   ///< descending, length k = min(rows, cols)
  Matrix v;                    ///< cols x k
};

/// One-sided (Hestenes) Jacobi SVD.
ThinSvd thin_svd(const Matrix& b, int max_sweeps = 100);

}  // namespace cronos
