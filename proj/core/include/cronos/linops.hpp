#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/dense.hpp"
#include "cronos/rng.hpp"

namespace cronos {

enum class GateSampling {
  Gaussian,  ///< g ~ N(0, I_d)
  DataRow,   ///< g = X_jᵀ for a uniformly drawn row j
};

/// Sampled ReLU activation patterns.
///
/// Gate i produces the 0/1 mask D_i = diag(1(X g_i >= 0)) on the training
/// rows. Together with X the gate set defines the block operators
///   F = [D_1 X, ..., D_P X, -D_1 X, ..., -D_P X]           (n x 2dP)
///   G = blockdiag((2D_1 - I) X, ..., (2D_P - I) X) twice    (2nP x 2dP)
/// which are applied matrix-free below.
struct GateSet {
  std::size_t n = 0;            ///< training rows the masks refer to
  std::size_t d = 0;            ///< feature count
  std::size_t requested = 0;    ///< P asked for before deduplication
  Matrix gates;                 ///< P x d, row i = g_i
  std::vector<std::vector<std::uint8_t>> masks;  ///< P masks of length n

  std::size_t patterns() const noexcept { return masks.size(); }
  /// Length of a stacked coefficient vector u, v, lam (2dP).
  std::size_t stacked_size() const noexcept { return 2 * d * patterns(); }
  /// Length of a slack vector s, nu (2nP).
  std::size_t slack_size() const noexcept { return 2 * n * patterns(); }
};

/// Draws P gates, computes masks and drops duplicate masks, resampling up to
/// 10 * P extra draws. The result may hold fewer than P patterns.
GateSet sample_gates(const Matrix& x, std::size_t patterns, Rng& rng,
                     GateSampling sampling = GateSampling::Gaussian);

/// Builds a gate set from explicit gate vectors (no deduplication).
GateSet gate_set_from_gates(const Matrix& x, Matrix gates);

/// Recomputes 1(X g_i >= 0) for every stored gate.
std::vector<std::vector<std::uint8_t>> compute_masks(const Matrix& x, const Matrix& gates);

/// F u = sum_i D_i X (u_i - u_{P+i})
std::vector<double> apply_F(const GateSet& gs, const Matrix& x, std::span<const double> u);
/// Fᵀ w
std::vector<double> apply_Ft(const GateSet& gs, const Matrix& x, std::span<const double> w);
/// G u, stacked as [G_i u_i]_{i<P} then [G_i u_{P+i}]_{i<P}
std::vector<double> apply_G(const GateSet& gs, const Matrix& x, std::span<const double> u);
/// Gᵀ z
std::vector<double> apply_Gt(const GateSet& gs, const Matrix& x, std::span<const double> z);
/// (1/rho) Fᵀ F u + Gᵀ G u
std::vector<double> apply_H(const GateSet& gs, const Matrix& x, double rho,
                            std::span<const double> u);

/// Output of the two-layer network on (possibly unseen) rows; gates are
/// re-evaluated on x_new.
std::vector<double> predict(const GateSet& gs, const Matrix& x_new, std::span<const double> u);

/// Eigenvalue comparison of F_iᵀF_i and G_iᵀG_i against XᵀX.
struct SpectrumReport {
  std::vector<double> gram;                    ///< λ_j(XᵀX), descending
  std::vector<std::vector<double>> f_blocks;   ///< λ_j(F_iᵀF_i) per pattern
  std::vector<std::vector<double>> g_blocks;   ///< λ_j(G_iᵀG_i) per pattern
  double max_violation = 0.0;  ///< max over i, j of block eigenvalue minus λ_j(XᵀX)
  bool dominated = true;       ///< max_violation <= 1e-8
};

SpectrumReport spectrum_check(const GateSet& gs, const Matrix& x);

// Checkpoint record: {version, P, d, n, requested, gates, masks} with masks
// as lowercase hex bitsets (bit j of the mask is bit (j % 8) of byte j / 8).
void to_json(nlohmann::json& j, const GateSet& gs);
void from_json(const nlohmann::json& j, GateSet& gs);

inline constexpr int kGateSetVersion = 1;

}  // namespace cronos
