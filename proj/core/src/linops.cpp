#include "cronos/linops.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace cronos {

namespace {

void check_data(const GateSet& gs, const Matrix& x) {
  if (x.rows() != gs.n || x.cols() != gs.d) {
    throw std::invalid_argument("gate set was built for a " + std::to_string(gs.n) + "x" +
                                std::to_string(gs.d) + " data matrix, got " +
                                std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw std::invalid_argument(std::string(what) + ": expected length " + std::to_string(want) +
                                ", got " + std::to_string(got));
  }
}

std::vector<std::uint8_t> mask_for(const Matrix& x, std::span<const double> gate) {
  std::vector<std::uint8_t> mask(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) mask[r] = dot(x.row(r), gate) >= 0.0 ? 1 : 0;
  return mask;
}

// out[r] = sum_i coef_i(r) * <x_r, w_i>, with the per-block weight supplied
// by the caller.
template <class Weight>
void blockwise_rows(const Matrix& x, std::span<const double> blocks, std::size_t count,
                    Weight weight, std::span<double> out) {
  const std::size_t d = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto xr = x.row(r);
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double wgt = weight(i, r);
      if (wgt == 0.0) continue;
      acc += wgt * dot(xr, blocks.subspan(i * d, d));
    }
    out[r] = acc;
  }
}

}  // namespace

std::vector<std::vector<std::uint8_t>> compute_masks(const Matrix& x, const Matrix& gates) {
  if (gates.cols() != x.cols()) {
    throw std::invalid_argument("compute_masks: gate dimension does not match feature count");
  }
  std::vector<std::vector<std::uint8_t>> masks;
  masks.reserve(gates.rows());
  for (std::size_t i = 0; i < gates.rows(); ++i) masks.push_back(mask_for(x, gates.row(i)));
  return masks;
}

GateSet sample_gates(const Matrix& x, std::size_t patterns, Rng& rng, GateSampling sampling) {
  if (patterns == 0) throw std::invalid_argument("sample_gates: P must be >= 1");
  if (x.rows() == 0 || x.cols() == 0) throw std::invalid_argument("sample_gates: empty data");
  const std::size_t d = x.cols();

  std::set<std::vector<std::uint8_t>> seen;
  std::vector<double> kept_gates;
  std::vector<std::vector<std::uint8_t>> kept_masks;
  const std::size_t max_draws = patterns + 10 * patterns;
  std::vector<double> g(d);
  for (std::size_t draw = 0; draw < max_draws && kept_masks.size() < patterns; ++draw) {
    if (sampling == GateSampling::Gaussian) {
      for (double& v : g) v = rng.normal();
    } else {
      const auto row = x.row(static_cast<std::size_t>(rng.below(x.rows())));
      std::copy(row.begin(), row.end(), g.begin());
    }
    auto mask = mask_for(x, g);
    if (!seen.insert(mask).second) continue;
    kept_gates.insert(kept_gates.end(), g.begin(), g.end());
    kept_masks.push_back(std::move(mask));
  }

  GateSet gs;
  gs.n = x.rows();
  gs.d = d;
  gs.requested = patterns;
  gs.gates = Matrix(kept_masks.size(), d, std::move(kept_gates));
  gs.masks = std::move(kept_masks);
  return gs;
}

GateSet gate_set_from_gates(const Matrix& x, Matrix gates) {
  if (gates.rows() == 0) throw std::invalid_argument("gate_set_from_gates: need >= 1 gate");
  GateSet gs;
  gs.n = x.rows();
  gs.d = x.cols();
  gs.requested = gates.rows();
  gs.masks = compute_masks(x, gates);
  gs.gates = std::move(gates);
  return gs;
}

std::vector<double> apply_F(const GateSet& gs, const Matrix& x, std::span<const double> u) {
  check_data(gs, x);
  check_length(u.size(), gs.stacked_size(), "apply_F");
  const std::size_t p = gs.patterns();
  const std::size_t d = gs.d;
  std::vector<double> diff(p * d);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < d; ++k) diff[i * d + k] = u[i * d + k] - u[(p + i) * d + k];
  std::vector<double> out(gs.n);
  blockwise_rows(
      x, diff, p, [&](std::size_t i, std::size_t r) { return gs.masks[i][r] ? 1.0 : 0.0; }, out);
  return out;
}

std::vector<double> apply_Ft(const GateSet& gs, const Matrix& x, std::span<const double> w) {
  check_data(gs, x);
  check_length(w.size(), gs.n, "apply_Ft");
  const std::size_t p = gs.patterns();
  const std::size_t d = gs.d;
  std::vector<double> out(gs.stacked_size(), 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    std::span<double> block(out.data() + i * d, d);
    for (std::size_t r = 0; r < gs.n; ++r)
      if (gs.masks[i][r]) axpy(w[r], x.row(r), block);
    for (std::size_t k = 0; k < d; ++k) out[(p + i) * d + k] = -block[k];
  }
  return out;
}

std::vector<double> apply_G(const GateSet& gs, const Matrix& x, std::span<const double> u) {
  check_data(gs, x);
  check_length(u.size(), gs.stacked_size(), "apply_G");
  const std::size_t p = gs.patterns();
  const std::size_t n = gs.n;
  const std::size_t d = gs.d;
  std::vector<double> out(gs.slack_size());
  for (std::size_t half = 0; half < 2; ++half) {
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t block = half * p + i;
      const auto ub = u.subspan(block * d, d);
      const auto& mask = gs.masks[i];
      for (std::size_t r = 0; r < n; ++r) {
        const double xu = dot(x.row(r), ub);
        out[block * n + r] = mask[r] ? xu : -xu;
      }
    }
  }
  return out;
}

std::vector<double> apply_Gt(const GateSet& gs, const Matrix& x, std::span<const double> z) {
  check_data(gs, x);
  check_length(z.size(), gs.slack_size(), "apply_Gt");
  const std::size_t p = gs.patterns();
  const std::size_t n = gs.n;
  const std::size_t d = gs.d;
  std::vector<double> out(gs.stacked_size(), 0.0);
  for (std::size_t half = 0; half < 2; ++half) {
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t block = half * p + i;
      std::span<double> ob(out.data() + block * d, d);
      const auto& mask = gs.masks[i];
      for (std::size_t r = 0; r < n; ++r) {
        const double zr = z[block * n + r];
        axpy(mask[r] ? zr : -zr, x.row(r), ob);
      }
    }
  }
  return out;
}

std::vector<double> apply_H(const GateSet& gs, const Matrix& x, double rho,
                            std::span<const double> u) {
  if (!(rho > 0.0)) throw std::invalid_argument("apply_H: rho must be positive");
  auto out = apply_Ft(gs, x, apply_F(gs, x, u));
  for (double& v : out) v /= rho;
  const auto gtg = apply_Gt(gs, x, apply_G(gs, x, u));
  axpy(1.0, gtg, out);
  return out;
}

std::vector<double> predict(const GateSet& gs, const Matrix& x_new, std::span<const double> u) {
  if (x_new.cols() != gs.d) {
    throw std::invalid_argument("predict: expected " + std::to_string(gs.d) +
                                " features, got " + std::to_string(x_new.cols()));
  }
  check_length(u.size(), gs.stacked_size(), "predict");
  const std::size_t p = gs.patterns();
  const std::size_t d = gs.d;
  std::vector<double> diff(p * d);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < d; ++k) diff[i * d + k] = u[i * d + k] - u[(p + i) * d + k];
  const auto masks = compute_masks(x_new, gs.gates);
  std::vector<double> out(x_new.rows());
  blockwise_rows(
      x_new, diff, p, [&](std::size_t i, std::size_t r) { return masks[i][r] ? 1.0 : 0.0; },
      out);
  return out;
}

SpectrumReport spectrum_check(const GateSet& gs, const Matrix& x) {
  check_data(gs, x);
  SpectrumReport report;
  report.gram = sym_eig(matmul_tn(x, x)).values;
  for (std::size_t i = 0; i < gs.patterns(); ++i) {
    Matrix fi = x;
    Matrix gi = x;
    for (std::size_t r = 0; r < gs.n; ++r) {
      if (gs.masks[i][r]) continue;
      for (double& v : fi.row(r)) v = 0.0;
      for (double& v : gi.row(r)) v = -v;
    }
    auto f_eigs = sym_eig(matmul_tn(fi, fi)).values;
    auto g_eigs = sym_eig(matmul_tn(gi, gi)).values;
    for (std::size_t j = 0; j < report.gram.size(); ++j) {
      report.max_violation = std::max(report.max_violation, f_eigs[j] - report.gram[j]);
      report.max_violation = std::max(report.max_violation, g_eigs[j] - report.gram[j]);
    }
    report.f_blocks.push_back(std::move(f_eigs));
    report.g_blocks.push_back(std::move(g_eigs));
  }
  if (gs.patterns() == 0) report.max_violation = 0.0;
  report.dominated = report.max_violation <= 1e-8;
  return report;
}

namespace {

std::string mask_to_hex(const std::vector<std::uint8_t>& mask) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::vector<std::uint8_t> bytes((mask.size() + 7) / 8, 0);
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) bytes[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> mask_from_hex(const std::string& hex, std::size_t n) {
  if (hex.size() != 2 * ((n + 7) / 8)) throw std::runtime_error("gate set: mask length mismatch");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw std::runtime_error("gate set: invalid hex digit in mask");
  };
  std::vector<std::uint8_t> mask(n);
  for (std::size_t j = 0; j < n; ++j) {
    const unsigned byte = nibble(hex[2 * (j / 8)]) << 4 | nibble(hex[2 * (j / 8) + 1]);
    mask[j] = (byte >> (j % 8)) & 1u;
  }
  return mask;
}

}  // namespace

void to_json(nlohmann::json& j, const GateSet& gs) {
  nlohmann::json gates = nlohmann::json::array();
  for (std::size_t i = 0; i < gs.gates.rows(); ++i) {
    const auto row = gs.gates.row(i);
    gates.push_back(std::vector<double>(row.begin(), row.end()));
  }
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& m : gs.masks) masks.push_back(mask_to_hex(m));
  j = nlohmann::json{{"version", kGateSetVersion},
                     {"P", gs.patterns()},
                     {"d", gs.d},
                     {"n", gs.n},
                     {"requested", gs.requested},
                     {"gates", std::move(gates)},
                     {"masks", std::move(masks)}};
}

void from_json(const nlohmann::json& j, GateSet& gs) {
  if (j.at("version").get<int>() != kGateSetVersion)
    throw std::runtime_error("gate set: unsupported version");
  const auto p = j.at("P").get<std::size_t>();
  gs.d = j.at("d").get<std::size_t>();
  gs.n = j.at("n").get<std::size_t>();
  gs.requested = j.value("requested", p);
  const auto& gates = j.at("gates");
  const auto& masks = j.at("masks");
  if (gates.size() != p || masks.size() != p) throw std::runtime_error("gate set: P mismatch");
  gs.gates = Matrix(p, gs.d);
  gs.masks.clear();
  for (std::size_t i = 0; i < p; ++i) {
    const auto row = gates[i].get<std::vector<double>>();
    if (row.size() != gs.d) throw std::runtime_error("gate set: gate length mismatch");
    std::copy(row.begin(), row.end(), gs.gates.row(i).begin());
    gs.masks.push_back(mask_from_hex(masks[i].get<std::string>(), gs.n));
  }
}

}  // namespace cronos
