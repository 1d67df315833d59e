#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/dense.hpp"
#include "cronos/linops.hpp"

namespace cronos {

/// ADMM iterates for
///   min ℓ(Fu, y) + β||v||_{2,1} + 1(s >= 0)   s.t.  u = v,  Gu = s.
/// lam and nu are the scaled duals of the two constraint blocks.
struct ConvexState {
  std::vector<double> u;    ///< 2dP
  std::vector<double> v;    ///< 2dP
  std::vector<double> s;    ///< 2nP
  std::vector<double> lam;  ///< 2dP
  std::vector<double> nu;   ///< 2nP

  static ConvexState zeros(const GateSet& gs);
  bool matches(const GateSet& gs) const noexcept;
};

struct SolverConfig {
  double rho = 0.01;                 ///< ADMM penalty, typical range [0.001, 1]
  double beta = 1e-3;                ///< group-lasso strength
  std::size_t patterns = 10;         ///< P, sampled activation patterns
  GateSampling gate_sampling = GateSampling::Gaussian;
  std::size_t rank = 20;             ///< Nyström sketch size
  std::size_t admm_iters = 5;
  std::size_t pcg_maxit = 50;
  std::optional<double> gamma;       ///< dual relaxation γ; unset means γ = rho
  double tol_exponent = 1.2;         ///< PCG tolerance δ_k = k^-tol_exponent
  bool tol_relative = true;          ///< scale δ_k by ||b_k||
  std::uint64_t seed = 0;

  bool residual_stop = false;        ///< stop once primal residual is small
  double eps_abs = 1e-6;
  double eps_rel = 1e-4;

  /// Adapt rho when one residual exceeds balance_ratio times the other.
  /// Skipped while either residual is exactly zero; rho stays in [1e-6, 1e6].
  bool residual_balancing = false;
  double balance_ratio = 10.0;
  double balance_factor = 2.0;

  /// Throws std::invalid_argument describing the first invalid field.
  void validate() const;
  /// Multiplier γ/ρ of the dual updates.
  double dual_step() const noexcept { return gamma.value_or(rho) / rho; }
};

void to_json(nlohmann::json& j, const SolverConfig& cfg);
/// Reads the fields present in j, keeping current values for the rest.
void from_json(const nlohmann::json& j, SolverConfig& cfg);

struct IterRecord {
  std::size_t iter = 0;
  double obj = 0.0;            ///< ℓ(Fu, y) + β||v||_{2,1}
  double resid_uv = 0.0;       ///< ||u - v||
  double resid_gus = 0.0;      ///< ||Gu - s||
  double dual_resid = 0.0;     ///< ρ||Δv + GᵀΔs||
  double ergodic_resid = 0.0;  ///< ||[ū - v̄; Gū - s̄]|| over iterates 1..iter
  std::size_t pcg_iters = 0;
  bool pcg_converged = true;
  double rho = 0.0;
  double wall_ms = 0.0;
};

struct IterHistory {
  std::vector<IterRecord> records;
};

/// One JSON object per line with fields
/// {iter, obj, resid_uv, resid_gus, pcg_iters, wall_ms}, in that order.
/// With timing == false wall_ms is written as 0 so reruns are byte-identical.
void write_history_jsonl(std::ostream& out, const IterHistory& history, bool timing = true);

/// Running means of the iterates produced by iterations 1..count.
struct ErgodicAverage {
  std::vector<double> u;
  std::vector<double> v;
  std::vector<double> s;
  std::size_t count = 0;
};

/// Smooth convex loss ℓ(z, y) with diagonal Hessian, and the Taylor
/// regularizer σ used by the general-loss u-step.
struct SmoothLoss {
  std::string name;
  std::function<double(std::span<const double>, std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>, std::span<const double>)> gradient;
  std::function<std::vector<double>(std::span<const double>, std::span<const double>)> hessian_diag;
  double sigma = 0.0;
};

/// ½||z - y||²
SmoothLoss least_squares_loss();
/// Σ log(1 + exp(-y z)) for labels y in {-1, +1}
SmoothLoss logistic_loss();

using IterationObserver = std::function<void(const IterRecord&, const ConvexState&)>;

struct SolveOptions {
  const ConvexState* warm_start = nullptr;
  IterationObserver observer;
  /// Iterations already run on this problem; a warm-started continuation
  /// passes its count so the PCG tolerance schedule δ_k picks up where it
  /// left off instead of restarting at k = 1.
  std::size_t prior_iters = 0;
};

struct SolveResult {
  ConvexState state;
  IterHistory history;
  ErgodicAverage ergodic;
  double final_rho = 0.0;
  std::size_t preconditioner_builds = 0;
};

/// Blockwise shrinkage prox of tau||·||_{2,1} over consecutive blocks of
/// length `block`: b ↦ b · max(0, 1 - tau/||b||).
std::vector<double> group_lasso_prox(std::span<const double> z, std::size_t block, double tau);
/// Elementwise max(z, 0).
std::vector<double> project_nonneg(std::span<const double> z);
/// Σ over blocks of ||b||₂.
double group_norm(std::span<const double> z, std::size_t block);

/// Inexact ADMM with a Nyström-preconditioned u-step for the least-squares
/// loss. The preconditioner is built once (and again only when residual
/// balancing changes rho).
SolveResult cronos_solve(const Matrix& x, std::span<const double> y, const GateSet& gs,
                         const SolverConfig& cfg, const SolveOptions& options = {});

/// Same ADMM loop for a general smooth loss: the u-step minimizes the
/// σ-regularized second-order model of ℓ around u^k. The preconditioner is
/// rebuilt from H^k = (1/ρ)Fᵀ diag(∇²ℓ) F + GᵀG every `refresh_every`
/// iterations.
SolveResult cronos_general_solve(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                 const SolverConfig& cfg, const SmoothLoss& loss,
                                 std::size_t refresh_every, const SolveOptions& options = {});

struct ObjectiveReport {
  double loss_term = 0.0;
  double reg_term = 0.0;
  double primal_resid_u_v = 0.0;
  double primal_resid_Gu_s = 0.0;
  double nonneg_violation = 0.0;  ///< ||min(s, 0)||, stands in for 1(s >= 0)
};

ObjectiveReport evaluate_objective(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                   const ConvexState& state, double beta);
ObjectiveReport evaluate_objective(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                   const ConvexState& state, double beta,
                                   const SmoothLoss& loss);

/// ||[ū - v̄; Gū - s̄]|| for an ergodic average.
double ergodic_feasibility(const Matrix& x, const GateSet& gs, const ErgodicAverage& avg);

void to_json(nlohmann::json& j, const ConvexState& state);
void from_json(const nlohmann::json& j, ConvexState& state);

}  // namespace cronos
