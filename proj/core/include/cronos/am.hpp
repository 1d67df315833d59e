#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/dense.hpp"
#include "cronos/linops.hpp"
#include "cronos/rng.hpp"
#include "cronos/solver.hpp"

namespace cronos {

struct DenseLayer {
  Matrix weight;              ///< out x in
  std::vector<double> bias;   ///< out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Inner (non-convex) layers of a deep ReLU network; every layer is
/// followed by a ReLU. An empty layer list is the identity map.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// Throws std::invalid_argument if consecutive layer shapes do not chain
  /// or a weight is non-finite.
  void validate() const;
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// He-normal weights, zero biases. widths = (d_in, h_1, ..., h_m).
MlpParams init_mlp(std::span<const std::size_t> widths, Rng& rng);

/// X̃ = ReLU(... ReLU(X W_1ᵀ + b_1) ...)
Matrix mlp_forward(const MlpParams& params, const Matrix& x);

/// Flattened view used by the inner optimizers: per layer, weight row-major
/// then bias.
std::vector<double> flatten(const MlpParams& params);
void unflatten(std::span<const double> flat, MlpParams& params);

/// Inner-layer objective with the convex head (gs, u) and masks held fixed:
///   (n / |B|) Σ_{j∈B} (Σ_i D_i[j] x̃_j(θ)ᵀ(u_i - u_{P+i}) - y_j)² + (α/2) Σ_l ||W_l||²_F
/// `rows` selects the minibatch B; empty means all rows.
double am_inner_objective(const MlpParams& params, const Matrix& x, std::span<const double> y,
                          const GateSet& gs, std::span<const double> u, double alpha,
                          std::span<const std::size_t> rows = {});

/// Exact gradient of am_inner_objective with respect to every weight and
/// bias (biases carry no decay).
MlpParams am_inner_grad(const MlpParams& params, const Matrix& x, std::span<const double> y,
                        const GateSet& gs, std::span<const double> u, double alpha,
                        std::span<const std::size_t> rows = {});

/// D-Adapted Adam (Defazio & Mishchenko) without bias correction or weight
/// decay; lr is the multiplier on the adapted step size d.
struct DAdaptAdamState {
  double lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double d = 1e-6;
  double growth_rate = std::numeric_limits<double>::infinity();
  double numerator_weighted = 0.0;
  std::size_t step = 0;
  std::vector<double> exp_avg;
  std::vector<double> exp_avg_sq;
  std::vector<double> s;
};

/// One minibatch step. State buffers are sized on first use.
void dadapt_adam_step(DAdaptAdamState& state, std::span<const double> grad,
                      std::span<double> params);

/// Plain Adam with bias correction.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

void adam_step(AdamState& state, std::span<const double> grad, std::span<double> params);

enum class InnerOptimizer { DAdaptAdam, AdamFixedLr };

struct AmConfig {
  double alpha = 1e-4;                  ///< inner-layer weight decay
  std::size_t outer_iters = 10;
  std::size_t cronos_iters_per_outer = 5;
  std::size_t inner_epochs = 1;
  std::size_t minibatch = 32;
  InnerOptimizer optimizer = InnerOptimizer::DAdaptAdam;
  double adam_lr = 1e-3;                ///< only for AdamFixedLr
  bool freeze_gates = false;            ///< keep gate vectors across outer iterations
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const AmConfig& cfg);
void from_json(const nlohmann::json& j, AmConfig& cfg);

struct OuterRecord {
  std::size_t outer = 0;
  double obj = 0.0;         ///< inner objective over all rows plus β||v||_{2,1}
  double resid_uv = 0.0;
  double resid_gus = 0.0;
  std::size_t pcg_iters = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;     ///< NaN without validation data
  double wall_ms = 0.0;
};

struct AmResult {
  MlpParams params;
  ConvexState state;
  GateSet gates;
  IterHistory history;             ///< every CRONOS iteration, numbered globally
  std::vector<OuterRecord> outer;  ///< one per outer iteration
};

/// Observer called after every outer iteration.
using OuterObserver = std::function<void(const OuterRecord&)>;

/// Alternating minimization: CRONOS on the convex head over X̃(θ), then
/// minibatch inner-layer steps with (u, v, s) fixed. widths = (d, h_1, ...,
/// h_m); widths of size 1 means no inner layers and reduces to a single
/// cronos_solve with cfg.admm_iters iterations on the raw data.
AmResult cronos_am_solve(const Matrix& x, std::span<const double> y,
                         std::span<const std::size_t> widths, const SolverConfig& cfg,
                         const AmConfig& am, const Matrix* x_val = nullptr,
                         std::span<const double> y_val = {}, const OuterObserver& observer = {});

/// Network output on new rows: head gates are evaluated on X̃(θ).
std::vector<double> am_predict(const MlpParams& params, const GateSet& gs,
                               std::span<const double> u, const Matrix& x);

/// Fraction of rows with sign(pred) == y, sign(0) taken as +1.
double sign_accuracy(std::span<const double> pred, std::span<const double> y);

void to_json(nlohmann::json& j, const MlpParams& p);
void from_json(const nlohmann::json& j, MlpParams& p);

}  // namespace cronos
