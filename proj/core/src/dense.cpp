#include "cronos/dense.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cronos {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

constexpr double kEps = std::numeric_limits<double>::epsilon();

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data size does not match rows*cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix out(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) out(i, i) = diag[i];
  return out;
}

std::vector<double> Matrix::col(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

void Matrix::set_col(std::size_t j, std::span<const double> values) {
  require(values.size() == rows_, "Matrix::set_col: length mismatch");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = values[i];
}

Matrix Matrix::transpose() const {
  Matrix out(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm2(std::span<const double> a) {
  // Scaled accumulation so that tiny or huge entries do not under/overflow.
  double scale = 0.0;
  double ssq = 1.0;
  for (double x : a) {
    if (x == 0.0) continue;
    const double ax = std::fabs(x);
    if (scale < ax) {
      ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
      scale = ax;
    } else {
      ssq += (ax / scale) * (ax / scale);
    }
  }
  return scale * std::sqrt(ssq);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), "axpy: length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

std::vector<double> add(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "add: length mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

std::vector<double> sub(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "sub: length mismatch");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

std::vector<double> scaled(double alpha, std::span<const double> a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i];
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      axpy(aik, b.row(k), out_row);
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: row count mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      axpy(aki, b_row, out.row(i));
    }
  }
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  require(a.cols() == x.size(), "matvec: dimension mismatch");
  std::vector<double> out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

std::vector<double> matvec_t(const Matrix& a, std::span<const double> x) {
  require(a.rows() == x.size(), "matvec_t: dimension mismatch");
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(x[i], a.row(i), out);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  return Matrix(a.rows(), a.cols(), add(a.data(), b.data()));
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  return Matrix(a.rows(), a.cols(), sub(a.data(), b.data()));
}

Matrix scaled(double alpha, const Matrix& a) {
  return Matrix(a.rows(), a.cols(), scaled(alpha, a.data()));
}

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::fabs(x));
  return m;
}

Matrix thin_qr(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  require(m >= n && n >= 1, "thin_qr: requires rows >= cols >= 1");

  const double threshold = 1e-12 * frobenius_norm(a);
  Matrix r = a;
  std::vector<std::vector<double>> reflectors(n);
  std::vector<double> diag(n);

  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> v(m - k);
    for (std::size_t i = k; i < m; ++i) v[i - k] = r(i, k);
    const double xnorm = norm2(v);
    const double alpha = v[0] >= 0.0 ? -xnorm : xnorm;
    if (!(xnorm > threshold) || xnorm == 0.0) {
      throw RankDeficientError("thin_qr: column " + std::to_string(k) +
                               " is numerically dependent on earlier columns");
    }
    v[0] -= alpha;
    const double vnorm = norm2(v);
    for (double& x : v) x /= vnorm;

    // R[k:, k:] -= 2 v (vᵀ R[k:, k:])
    for (std::size_t j = k; j < n; ++j) {
      double proj = 0.0;
      for (std::size_t i = k; i < m; ++i) proj += v[i - k] * r(i, j);
      proj *= 2.0;
      for (std::size_t i = k; i < m; ++i) r(i, j) -= proj * v[i - k];
    }
    diag[k] = alpha;
    reflectors[k] = std::move(v);
  }

  Matrix q(m, n);
  for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
  for (std::size_t kk = n; kk-- > 0;) {
    const auto& v = reflectors[kk];
    for (std::size_t j = 0; j < n; ++j) {
      double proj = 0.0;
      for (std::size_t i = kk; i < m; ++i) proj += v[i - kk] * q(i, j);
      proj *= 2.0;
      for (std::size_t i = kk; i < m; ++i) q(i, j) -= proj * v[i - kk];
    }
  }
  // Positive diagonal in R makes Q unique.
  for (std::size_t j = 0; j < n; ++j) {
    if (diag[j] < 0.0)
      for (std::size_t i = 0; i < m; ++i) q(i, j) = -q(i, j);
  }
  return q;
}

Matrix cholesky(const Matrix& s) {
  require(s.rows() == s.cols(), "cholesky: matrix must be square");
  const std::size_t n = s.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = s(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > 0.0)) {
      throw NotPositiveDefiniteError("cholesky: non-positive pivot at index " +
                                     std::to_string(j) + " (shift too small)");
    }
    const double ljj = std::sqrt(pivot);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double acc = s(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

Matrix triangular_solve(const Matrix& t, Triangle tri, const Matrix& b) {
  require(t.rows() == t.cols(), "triangular_solve: matrix must be square");
  require(t.rows() == b.rows(), "triangular_solve: dimension mismatch");
  const std::size_t n = t.rows();
  Matrix x = b;
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t i = tri == Triangle::Lower ? step : n - 1 - step;
    const double tii = t(i, i);
    if (tii == 0.0) throw std::domain_error("triangular_solve: zero on diagonal");
    auto xi = x.row(i);
    if (tri == Triangle::Lower) {
      for (std::size_t k = 0; k < i; ++k) axpy(-t(i, k), x.row(k), xi);
    } else {
      for (std::size_t k = i + 1; k < n; ++k) axpy(-t(i, k), x.row(k), xi);
    }
    for (double& v : xi) v /= tii;
  }
  return x;
}

SymEig sym_eig(const Matrix& s, int max_sweeps) {
  require(s.rows() == s.cols(), "sym_eig: matrix must be square");
  const std::size_t n = s.rows();
  Matrix a = s;
  // Symmetrize so round-off asymmetry in the input does not bias rotations.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (s(i, j) + s(j, i));
  Matrix v = Matrix::identity(n);

  const double scale = frobenius_norm(a);
  bool converged = scale == 0.0 || n == 1;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= kEps * scale) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= kEps * kEps * scale) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) > 1e3 * kEps * scale)
      throw NoConvergenceError("sym_eig: Jacobi sweeps did not converge");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymEig out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

namespace {

// Replace the listed columns of q with unit vectors orthogonal to all the
// other columns (two passes of classical Gram-Schmidt over e_1, e_2, ...).
void complete_orthonormal(Matrix& q, const std::vector<std::size_t>& missing) {
  const std::size_t m = q.rows();
  const std::size_t n = q.cols();
  std::vector<bool> is_missing(n, false);
  for (std::size_t j : missing) is_missing[j] = true;
  std::size_t candidate = 0;
  for (std::size_t j : missing) {
    for (; candidate < m; ++candidate) {
      std::vector<double> w(m, 0.0);
      w[candidate] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < n; ++k) {
          if (is_missing[k]) continue;
          const auto col = q.col(k);
          axpy(-dot(col, w), col, w);
        }
      }
      const double nrm = norm2(w);
      if (nrm > 0.5) {
        for (double& x : w) x /= nrm;
        q.set_col(j, w);
        is_missing[j] = false;
        ++candidate;
        break;
      }
    }
  }
}

}  // namespace

ThinSvd thin_svd(const Matrix& b, int max_sweeps) {
  require(b.rows() >= 1 && b.cols() >= 1, "thin_svd: empty input");
  if (b.rows() < b.cols()) {
    ThinSvd t = thin_svd(b.transpose(), max_sweeps);
    return ThinSvd{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }
  const std::size_t m = b.rows();
  const std::size_t n = b.cols();
  // Columns are rotated in place; work on the transpose so each column is a
  // contiguous row.
  Matrix w = b.transpose();
  Matrix vt = Matrix::identity(n);

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        auto wp = w.row(p);
        auto wq = w.row(q);
        const double alpha = dot(wp, wp);
        const double beta = dot(wq, wq);
        const double gamma = dot(wp, wq);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::fabs(gamma) <= kEps * std::sqrt(alpha) * std::sqrt(beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = wp[i], xq = wq[i];
          wp[i] = c * xp - sn * xq;
          wq[i] = sn * xp + c * xq;
        }
        auto vp = vt.row(p);
        auto vq = vt.row(q);
        for (std::size_t i = 0; i < n; ++i) {
          const double xp = vp[i], xq = vq[i];
          vp[i] = c * xp - sn * xq;
          vq[i] = sn * xp + c * xq;
        }
      }
    }
  }
  if (!converged) throw NoConvergenceError("thin_svd: Jacobi sweeps did not converge");

  std::vector<double> sig(n);
  for (std::size_t j = 0; j < n; ++j) sig[j] = norm2(w.row(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sig[x] > sig[y]; });

  ThinSvd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  const double tiny = std::numeric_limits<double>::min() / kEps;
  std::vector<std::size_t> missing;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.sigma[k] = sig[j];
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = vt(j, i);
    if (sig[j] <= tiny) {
      out.sigma[k] = 0.0;
      missing.push_back(k);
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = w(j, i) / sig[j];
  }
  if (!missing.empty()) complete_orthonormal(out.u, missing);
  return out;
}

}  // namespace cronos
