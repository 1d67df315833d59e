#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cronos/dense.hpp"
#include "cronos/rng.hpp"

namespace cronos {

/// Matrix-free action x -> A x.
using LinearOperator = std::function<std::vector<double>(std::span<const double>)>;

/// Low-rank PSD approximation Ĥ = U diag(lam) Uᵀ together with the
/// regularizer mu of the system (H + mu I) it preconditions.
struct NystromApprox {
  Matrix u;                 ///< dim x r, orthonormal columns
  std::vector<double> lam;  ///< descending, non-negative
  double shift = 0.0;       ///< stabilization shift used while sketching
  double mu = 1.0;

  std::size_t dim() const noexcept { return u.rows(); }
  std::size_t rank() const noexcept { return lam.size(); }
};

/// Raised when the sketch Cholesky keeps failing after shift escalation.
class SketchBreakdownError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when PCG sees pᵀ(A p) <= 0, i.e. the operator is not PD.
class PcgBreakdownError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Randomized Nyström approximation of a PSD operator from exactly `rank`
/// applications of `op`:
///   Ω = qr(randn(dim, r)),  Y = H Ω,  σ = eps ||Y||₂,  Y_σ = Y + σ Ω,
///   C = chol(Ωᵀ Y_σ),  B = Y_σ C⁻¹,  [U, Σ] = svd(B),  lam = max(0, Σ² - σ).
/// ||Y||₂ is estimated with 10 power iterations on YᵀY. A failing Cholesky
/// is retried with the shift multiplied by 10, at most 3 times.
NystromApprox rand_nystrom(const LinearOperator& op, std::size_t dim, std::size_t rank, Rng& rng,
                           double mu = 1.0);

/// P⁻¹ x = (lam_r + mu) U (Λ + mu I)⁻¹ Uᵀ x + (I - U Uᵀ) x
std::vector<double> precond_inv_apply(const NystromApprox& ap, std::span<const double> x);
/// P x = (lam_r + mu)⁻¹ U (Λ + mu I) Uᵀ x + (I - U Uᵀ) x
std::vector<double> precond_apply(const NystromApprox& ap, std::span<const double> x);

/// Dense U diag(lam) Uᵀ; for diagnostics on small problems.
Matrix nystrom_dense(const NystromApprox& ap);

struct PcgReport {
  std::size_t iterations = 0;
  double final_residual_norm = 0.0;
  bool converged = false;
};

struct PcgResult {
  std::vector<double> x;
  PcgReport report;
};

/// Called after every PCG iteration with the iteration count and iterate.
using PcgObserver = std::function<void(std::size_t, std::span<const double>)>;

/// Nyström-preconditioned CG on system(x) = (H + mu I) x = b, starting at
/// x0. Stops when the recurrence residual satisfies ||w||₂ <= tol or after
/// maxit iterations.
PcgResult nystrom_pcg(const LinearOperator& system, std::span<const double> b,
                      std::span<const double> x0, const NystromApprox& ap, double tol,
                      std::size_t maxit, const PcgObserver& observer = {});

}  // namespace cronos
