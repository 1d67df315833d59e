#include "cronos/nystrom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cronos {

namespace {

double spectral_norm_estimate(const Matrix& y) {
  const Matrix gram = matmul_tn(y, y);
  const std::size_t r = gram.rows();
  std::vector<double> x(r, 1.0 / std::sqrt(static_cast<double>(r)));
  double lambda = 0.0;
  for (int it = 0; it < 10; ++it) {
    auto gx = matvec(gram, x);
    const double nrm = norm2(gx);
    if (nrm == 0.0) return 0.0;
    lambda = dot(x, gx);
    for (std::size_t i = 0; i < r; ++i) x[i] = gx[i] / nrm;
  }
  lambda = std::max(lambda, dot(x, matvec(gram, x)));
  return std::sqrt(std::max(lambda, 0.0));
}

std::vector<double> project_onto(const Matrix& u, std::span<const double> x) {
  return matvec_t(u, x);
}

}  // namespace

NystromApprox rand_nystrom(const LinearOperator& op, std::size_t dim, std::size_t rank, Rng& rng,
                           double mu) {
  if (rank < 1 || rank > dim) {
    throw std::invalid_argument("rand_nystrom: need 1 <= rank <= dim (rank " +
                                std::to_string(rank) + ", dim " + std::to_string(dim) + ")");
  }
  if (!(mu > 0.0)) throw std::invalid_argument("rand_nystrom: mu must be positive");

  const Matrix omega = thin_qr(gaussian_matrix(rng, dim, rank));
  Matrix y(dim, rank);
  for (std::size_t j = 0; j < rank; ++j) {
    const auto col = omega.col(j);
    const auto hcol = op(col);
    if (hcol.size() != dim) throw std::invalid_argument("rand_nystrom: operator size mismatch");
    y.set_col(j, hcol);
  }

  const double ynorm = spectral_norm_estimate(y);
  if (ynorm == 0.0) {
    // H Ω = 0: the approximation is exactly zero on the sketched range.
    return NystromApprox{omega, std::vector<double>(rank, 0.0), 0.0, mu};
  }

  double shift = std::numeric_limits<double>::epsilon() * ynorm;
  for (int attempt = 0; attempt <= 3; ++attempt, shift *= 10.0) {
    Matrix y_shift = y;
    axpy(shift, omega.data(), y_shift.data());
    Matrix core = matmul_tn(omega, y_shift);
    for (std::size_t i = 0; i < rank; ++i)
      for (std::size_t j = i + 1; j < rank; ++j)
        core(i, j) = core(j, i) = 0.5 * (core(i, j) + core(j, i));
    Matrix chol;
    try {
      chol = cholesky(core);
    } catch (const NotPositiveDefiniteError&) {
      continue;
    }
    // B C = Y_σ with C = Lᵀ  <=>  L Bᵀ = Y_σᵀ
    const Matrix b = triangular_solve(chol, Triangle::Lower, y_shift.transpose()).transpose();
    ThinSvd svd = thin_svd(b);
    NystromApprox out{std::move(svd.u), std::vector<double>(rank), shift, mu};
    for (std::size_t k = 0; k < rank; ++k)
      out.lam[k] = std::max(0.0, svd.sigma[k] * svd.sigma[k] - shift);
    return out;
  }
  throw SketchBreakdownError("rand_nystrom: sketch breakdown, Cholesky failed after 3 shift "
                             "increases");
}

std::vector<double> precond_inv_apply(const NystromApprox& ap, std::span<const double> x) {
  const auto coeff = project_onto(ap.u, x);
  const double lam_r = ap.lam.empty() ? 0.0 : ap.lam.back();
  std::vector<double> weighted(coeff.size());
  for (std::size_t k = 0; k < coeff.size(); ++k)
    weighted[k] = ((lam_r + ap.mu) / (ap.lam[k] + ap.mu) - 1.0) * coeff[k];
  std::vector<double> out(x.begin(), x.end());
  axpy(1.0, matvec(ap.u, weighted), out);
  return out;
}

std::vector<double> precond_apply(const NystromApprox& ap, std::span<const double> x) {
  const auto coeff = project_onto(ap.u, x);
  const double lam_r = ap.lam.empty() ? 0.0 : ap.lam.back();
  std::vector<double> weighted(coeff.size());
  for (std::size_t k = 0; k < coeff.size(); ++k)
    weighted[k] = ((ap.lam[k] + ap.mu) / (lam_r + ap.mu) - 1.0) * coeff[k];
  std::vector<double> out(x.begin(), x.end());
  axpy(1.0, matvec(ap.u, weighted), out);
  return out;
}

Matrix nystrom_dense(const NystromApprox& ap) {
  Matrix scaled_u = ap.u;
  for (std::size_t i = 0; i < scaled_u.rows(); ++i)
    for (std::size_t k = 0; k < ap.rank(); ++k) scaled_u(i, k) *= ap.lam[k];
  return matmul(scaled_u, ap.u.transpose());
}

PcgResult nystrom_pcg(const LinearOperator& system, std::span<const double> b,
                      std::span<const double> x0, const NystromApprox& ap, double tol,
                      std::size_t maxit, const PcgObserver& observer) {
  if (!(tol > 0.0)) throw std::invalid_argument("nystrom_pcg: tol must be positive");
  if (b.size() != x0.size() || b.size() != ap.dim()) {
    throw std::invalid_argument("nystrom_pcg: dimension mismatch");
  }

  PcgResult result;
  result.x.assign(x0.begin(), x0.end());
  auto& x = result.x;

  auto w = sub(b, system(x));
  auto y = precond_inv_apply(ap, w);
  auto p = y;
  double wy = dot(w, y);
  double wnorm = norm2(w);
  std::size_t it = 0;
  while (wnorm > tol && it < maxit) {
    const auto v = system(p);
    const double pv = dot(p, v);
    if (!(pv > 0.0)) {
      throw PcgBreakdownError("nystrom_pcg: breakdown at iteration " + std::to_string(it) +
                              ", p'Ap = " + std::to_string(pv) + " (operator not positive "
                              "definite)");
    }
    const double alpha = wy / pv;
    axpy(alpha, p, x);
    axpy(-alpha, v, w);
    y = precond_inv_apply(ap, w);
    const double wy_next = dot(w, y);
    const double beta = wy_next / wy;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = y[i] + beta * p[i];
    wy = wy_next;
    wnorm = norm2(w);
    ++it;
    if (observer) observer(it, x);
  }
  result.report.iterations = it;
  result.report.final_residual_norm = wnorm;
  result.report.converged = wnorm <= tol;
  return result;
}

}  // namespace cronos
