#include "cronos/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "cronos/nystrom.hpp"

namespace cronos {

namespace {

// The sketch stream is kept apart from whatever stream sampled the gates.
constexpr std::uint64_t kSketchStream = 0x6e79737472c0ffeeULL;

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double sq(double x) { return x * x; }

void check_problem(const Matrix& x, std::span<const double> y, const GateSet& gs) {
  if (x.rows() != gs.n || x.cols() != gs.d)
    throw std::invalid_argument("solver: data matrix does not match the gate set");
  if (y.size() != gs.n) throw std::invalid_argument("solver: label count does not match rows");
  if (gs.patterns() == 0) throw std::invalid_argument("solver: gate set is empty");
  if (!all_finite(x.data()) || !all_finite(y))
    throw std::invalid_argument("solver: data contains NaN or Inf");
}

using Clock = std::chrono::steady_clock;

SolveResult admm_loop(const Matrix& x, std::span<const double> y, const GateSet& gs,
                      const SolverConfig& cfg, const SolveOptions& options,
                      const SmoothLoss* loss, std::size_t refresh_every) {
  cfg.validate();
  check_problem(x, y, gs);

  SolveResult result;
  ConvexState& st = result.state;
  if (options.warm_start) {
    if (!options.warm_start->matches(gs))
      throw std::invalid_argument("solver: warm start has the wrong dimensions");
    st = *options.warm_start;
  } else {
    st = ConvexState::zeros(gs);
  }

  const std::size_t dim = gs.stacked_size();
  const std::size_t rank = std::min(cfg.rank, dim);
  const std::size_t d = gs.d;
  double rho = cfg.rho;

  std::vector<double> fty;
  if (!loss) fty = apply_Ft(gs, x, y);
  std::vector<double> curvature(gs.n, 1.0);

  // H = (1/ρ) Fᵀ diag(curvature) F + GᵀG. With curvature == 1 this performs
  // exactly the operations of apply_H.
  const LinearOperator hessian = [&](std::span<const double> p) {
    std::vector<double> out;
    if (loss) {
      auto fp = apply_F(gs, x, p);
      for (std::size_t r = 0; r < fp.size(); ++r) fp[r] *= curvature[r];
      out = apply_Ft(gs, x, fp);
      for (double& v : out) v /= rho;
      axpy(1.0, apply_Gt(gs, x, apply_G(gs, x, p)), out);
    } else {
      out = apply_H(gs, x, rho, p);
    }
    return out;
  };
  double mu = 1.0;
  const LinearOperator system = [&](std::span<const double> p) {
    auto out = hessian(p);
    axpy(mu, p, out);
    return out;
  };

  NystromApprox precond;
  bool need_build = true;

  std::vector<double> sum_u(dim, 0.0), sum_v(dim, 0.0);
  std::vector<double> sum_s(gs.slack_size(), 0.0), sum_gu(gs.slack_size(), 0.0);

  const auto start = Clock::now();
  for (std::size_t k = 1; k <= cfg.admm_iters; ++k) {
    // u-step: (H + μI) u = b
    std::vector<double> b;
    if (loss) {
      const auto z = apply_F(gs, x, st.u);
      const auto grad = loss->gradient(z, y);
      curvature = loss->hessian_diag(z, y);
      mu = 1.0 + loss->sigma / rho;
      if ((k - 1) % refresh_every == 0) need_build = true;
      // Stationarity of the Taylor model:
      // (FᵀWF + σI + ρI + ρGᵀG) u = FᵀWz - Fᵀ∇ℓ + σu^k + ρ(v - λ) + ρGᵀ(s - ν)
      std::vector<double> t(z.size());
      for (std::size_t r = 0; r < z.size(); ++r) t[r] = curvature[r] * z[r] - grad[r];
      auto lin = apply_Ft(gs, x, t);
      if (loss->sigma != 0.0) axpy(loss->sigma, st.u, lin);
      b = scaled(1.0 / rho, lin);
    } else {
      b = scaled(1.0 / rho, fty);
    }
    axpy(1.0, st.v, b);
    axpy(-1.0, st.lam, b);
    axpy(1.0, apply_Gt(gs, x, sub(st.s, st.nu)), b);

    if (need_build) {
      Rng sketch(cfg.seed ^ kSketchStream);
      precond = rand_nystrom(hessian, dim, rank, sketch, mu);
      ++result.preconditioner_builds;
      need_build = false;
    }

    IterRecord rec;
    rec.iter = k;
    rec.rho = rho;
    const double bnorm = norm2(b);
    const double tol = std::pow(static_cast<double>(k + options.prior_iters), -cfg.tol_exponent) *
                       (cfg.tol_relative ? bnorm : 1.0);
    if (bnorm == 0.0) {
      std::fill(st.u.begin(), st.u.end(), 0.0);
    } else {
      auto pcg = nystrom_pcg(system, b, st.u, precond, tol, cfg.pcg_maxit);
      st.u = std::move(pcg.x);
      rec.pcg_iters = pcg.report.iterations;
      rec.pcg_converged = pcg.report.converged;
    }
    if (!all_finite(st.u))
      throw std::runtime_error("solver: non-finite u iterate at iteration " + std::to_string(k));

    // v, s and dual updates
    const auto v_prev = st.v;
    const auto s_prev = st.s;
    st.v = group_lasso_prox(add(st.u, st.lam), d, cfg.beta / rho);
    const auto gu = apply_G(gs, x, st.u);
    st.s = project_nonneg(add(gu, st.nu));
    const double step = cfg.gamma.value_or(rho) / rho;
    axpy(step, sub(st.u, st.v), st.lam);
    axpy(step, sub(gu, st.s), st.nu);
    if (!all_finite(st.lam) || !all_finite(st.nu))
      throw std::runtime_error("solver: non-finite dual iterate at iteration " +
                               std::to_string(k));

    const auto fu = apply_F(gs, x, st.u);
    const double loss_term = loss ? loss->value(fu, y) : 0.5 * sq(norm2(sub(fu, y)));
    rec.obj = loss_term + cfg.beta * group_norm(st.v, d);
    rec.resid_uv = norm2(sub(st.u, st.v));
    rec.resid_gus = norm2(sub(gu, st.s));
    auto dual = sub(st.v, v_prev);
    axpy(1.0, apply_Gt(gs, x, sub(st.s, s_prev)), dual);
    rec.dual_resid = rho * norm2(dual);

    axpy(1.0, st.u, sum_u);
    axpy(1.0, st.v, sum_v);
    axpy(1.0, st.s, sum_s);
    axpy(1.0, gu, sum_gu);
    rec.ergodic_resid =
        std::hypot(norm2(sub(sum_u, sum_v)), norm2(sub(sum_gu, sum_s))) / static_cast<double>(k);
    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

    result.history.records.push_back(rec);
    if (options.observer) options.observer(rec, st);

    const double primal = std::hypot(rec.resid_uv, rec.resid_gus);
    if (cfg.residual_stop) {
      const double scale = std::max(std::hypot(norm2(st.u), norm2(gu)),
                                    std::hypot(norm2(st.v), norm2(st.s)));
      if (primal <= cfg.eps_abs + cfg.eps_rel * scale) break;
    }
    if (cfg.residual_balancing && k < cfg.admm_iters) {
      // A zero residual carries no scale information (e.g. v, s unchanged),
      // so only rebalance when both are positive, and keep rho bounded.
      double factor = 1.0;
      if (primal > 0.0 && rec.dual_resid > 0.0) {
        if (primal > cfg.balance_ratio * rec.dual_resid && rho * cfg.balance_factor <= kRhoMax) {
          factor = cfg.balance_factor;
        } else if (rec.dual_resid > cfg.balance_ratio * primal &&
                   rho / cfg.balance_factor >= kRhoMin) {
          factor = 1.0 / cfg.balance_factor;
        }
      }
      if (factor != 1.0) {
        // Scaled duals are y/ρ; keep the unscaled multipliers fixed.
        rho *= factor;
        for (double& v : st.lam) v /= factor;
        for (double& v : st.nu) v /= factor;
        need_build = true;
      }
    }
  }

  auto& erg = result.ergodic;
  erg.count = result.history.records.size();
  const double inv = erg.count ? 1.0 / static_cast<double>(erg.count) : 0.0;
  erg.u = scaled(inv, sum_u);
  erg.v = scaled(inv, sum_v);
  erg.s = scaled(inv, sum_s);
  result.final_rho = rho;
  return result;
}

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

ConvexState ConvexState::zeros(const GateSet& gs) {
  const std::size_t a = gs.stacked_size();
  const std::size_t b = gs.slack_size();
  return ConvexState{std::vector<double>(a, 0.0), std::vector<double>(a, 0.0),
                     std::vector<double>(b, 0.0), std::vector<double>(a, 0.0),
                     std::vector<double>(b, 0.0)};
}

bool ConvexState::matches(const GateSet& gs) const noexcept {
  const std::size_t a = gs.stacked_size();
  const std::size_t b = gs.slack_size();
  return u.size() == a && v.size() == a && lam.size() == a && s.size() == b && nu.size() == b;
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("SolverConfig: " + msg); };
  if (!(rho > 0.0) || !std::isfinite(rho)) fail("rho must be a positive finite number");
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta must be non-negative");
  if (patterns < 1) fail("patterns must be >= 1");
  if (rank < 1) fail("rank must be >= 1");
  if (admm_iters < 1) fail("admm_iters must be >= 1");
  if (pcg_maxit < 1) fail("pcg_maxit must be >= 1");
  if (gamma && (!(*gamma > 0.0) || !std::isfinite(*gamma))) fail("gamma must be positive");
  if (!(tol_exponent > 0.0)) fail("tol_exponent must be positive");
  if (!(eps_abs >= 0.0) || !(eps_rel >= 0.0)) fail("eps_abs/eps_rel must be non-negative");
  if (!(balance_ratio > 1.0)) fail("balance_ratio must exceed 1");
  if (!(balance_factor > 1.0)) fail("balance_factor must exceed 1");
}

void to_json(nlohmann::json& j, const SolverConfig& c) {
  j = nlohmann::json{
      {"rho", c.rho},
      {"beta", c.beta},
      {"patterns", c.patterns},
      {"gate_sampling", c.gate_sampling == GateSampling::Gaussian ? "gaussian" : "data-row"},
      {"rank", c.rank},
      {"admm_iters", c.admm_iters},
      {"pcg_maxit", c.pcg_maxit},
      {"gamma", c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr)},
      {"tol_exponent", c.tol_exponent},
      {"tol_relative", c.tol_relative},
      {"seed", c.seed},
      {"residual_stop", c.residual_stop},
      {"eps_abs", c.eps_abs},
      {"eps_rel", c.eps_rel},
      {"residual_balancing", c.residual_balancing},
      {"balance_ratio", c.balance_ratio},
      {"balance_factor", c.balance_factor}};
}

void from_json(const nlohmann::json& j, SolverConfig& c) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("rho", c.rho);
  read("beta", c.beta);
  read("patterns", c.patterns);
  if (j.contains("gate_sampling")) {
    const auto s = j.at("gate_sampling").get<std::string>();
    if (s == "gaussian") c.gate_sampling = GateSampling::Gaussian;
    else if (s == "data-row") c.gate_sampling = GateSampling::DataRow;
    else throw std::invalid_argument("SolverConfig: unknown gate_sampling '" + s + "'");
  }
  read("rank", c.rank);
  read("admm_iters", c.admm_iters);
  read("pcg_maxit", c.pcg_maxit);
  if (j.contains("gamma")) {
    if (j.at("gamma").is_null()) c.gamma.reset();
    else c.gamma = j.at("gamma").get<double>();
  }
  read("tol_exponent", c.tol_exponent);
  read("tol_relative", c.tol_relative);
  read("seed", c.seed);
  read("residual_stop", c.residual_stop);
  read("eps_abs", c.eps_abs);
  read("eps_rel", c.eps_rel);
  read("residual_balancing", c.residual_balancing);
  read("balance_ratio", c.balance_ratio);
  read("balance_factor", c.balance_factor);
}

void write_history_jsonl(std::ostream& out, const IterHistory& history, bool timing) {
  for (const auto& r : history.records) {
    nlohmann::ordered_json line;
    line["iter"] = r.iter;
    line["obj"] = r.obj;
    line["resid_uv"] = r.resid_uv;
    line["resid_gus"] = r.resid_gus;
    line["pcg_iters"] = r.pcg_iters;
    line["wall_ms"] = timing ? r.wall_ms : 0.0;
    out << line.dump() << '\n';
  }
}

SmoothLoss least_squares_loss() {
  SmoothLoss l;
  l.name = "least_squares";
  l.value = [](std::span<const double> z, std::span<const double> y) {
    const double r = norm2(sub(z, y));
    return 0.5 * r * r;
  };
  l.gradient = [](std::span<const double> z, std::span<const double> y) { return sub(z, y); };
  l.hessian_diag = [](std::span<const double> z, std::span<const double>) {
    return std::vector<double>(z.size(), 1.0);
  };
  return l;
}

SmoothLoss logistic_loss() {
  SmoothLoss l;
  l.name = "logistic";
  l.value = [](std::span<const double> z, std::span<const double> y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) acc += softplus(-y[i] * z[i]);
    return acc;
  };
  l.gradient = [](std::span<const double> z, std::span<const double> y) {
    std::vector<double> g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = -y[i] * sigmoid(-y[i] * z[i]);
    return g;
  };
  l.hessian_diag = [](std::span<const double> z, std::span<const double> y) {
    std::vector<double> h(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double t = y[i] * z[i];
      h[i] = y[i] * y[i] * sigmoid(t) * sigmoid(-t);
    }
    return h;
  };
  return l;
}

std::vector<double> group_lasso_prox(std::span<const double> z, std::size_t block, double tau) {
  if (block == 0 || z.size() % block != 0)
    throw std::invalid_argument("group_lasso_prox: length is not a multiple of the block size");
  if (!(tau >= 0.0)) throw std::invalid_argument("group_lasso_prox: tau must be non-negative");
  std::vector<double> out(z.begin(), z.end());
  for (std::size_t start = 0; start < z.size(); start += block) {
    std::span<double> b(out.data() + start, block);
    const double nrm = norm2(b);
    const double factor = nrm > tau ? 1.0 - tau / nrm : 0.0;
    for (double& v : b) v *= factor;
  }
  return out;
}

std::vector<double> project_nonneg(std::span<const double> z) {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
  return out;
}

double group_norm(std::span<const double> z, std::size_t block) {
  if (block == 0 || z.size() % block != 0)
    throw std::invalid_argument("group_norm: length is not a multiple of the block size");
  double acc = 0.0;
  for (std::size_t start = 0; start < z.size(); start += block)
    acc += norm2(z.subspan(start, block));
  return acc;
}

SolveResult cronos_solve(const Matrix& x, std::span<const double> y, const GateSet& gs,
                         const SolverConfig& cfg, const SolveOptions& options) {
  return admm_loop(x, y, gs, cfg, options, nullptr, 1);
}

SolveResult cronos_general_solve(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                 const SolverConfig& cfg, const SmoothLoss& loss,
                                 std::size_t refresh_every, const SolveOptions& options) {
  if (refresh_every < 1) throw std::invalid_argument("cronos_general_solve: refresh_every >= 1");
  if (!loss.value || !loss.gradient || !loss.hessian_diag)
    throw std::invalid_argument("cronos_general_solve: loss is missing an evaluator");
  if (!(loss.sigma >= 0.0)) throw std::invalid_argument("cronos_general_solve: sigma < 0");
  return admm_loop(x, y, gs, cfg, options, &loss, refresh_every);
}

ObjectiveReport evaluate_objective(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                   const ConvexState& state, double beta) {
  return evaluate_objective(x, y, gs, state, beta, least_squares_loss());
}

ObjectiveReport evaluate_objective(const Matrix& x, std::span<const double> y, const GateSet& gs,
                                   const ConvexState& state, double beta,
                                   const SmoothLoss& loss) {
  check_problem(x, y, gs);
  if (!state.matches(gs)) throw std::invalid_argument("evaluate_objective: state size mismatch");
  ObjectiveReport rep;
  rep.loss_term = loss.value(apply_F(gs, x, state.u), y);
  rep.reg_term = beta * group_norm(state.v, gs.d);
  rep.primal_resid_u_v = norm2(sub(state.u, state.v));
  rep.primal_resid_Gu_s = norm2(sub(apply_G(gs, x, state.u), state.s));
  double viol = 0.0;
  for (double s : state.s)
    if (s < 0.0) viol += s * s;
  rep.nonneg_violation = std::sqrt(viol);
  return rep;
}

double ergodic_feasibility(const Matrix& x, const GateSet& gs, const ErgodicAverage& avg) {
  return std::hypot(norm2(sub(avg.u, avg.v)), norm2(sub(apply_G(gs, x, avg.u), avg.s)));
}

void to_json(nlohmann::json& j, const ConvexState& s) {
  j = nlohmann::json{{"u", s.u}, {"v", s.v}, {"s", s.s}, {"lam", s.lam}, {"nu", s.nu}};
}

void from_json(const nlohmann::json& j, ConvexState& s) {
  j.at("u").get_to(s.u);
  j.at("v").get_to(s.v);
  j.at("s").get_to(s.s);
  j.at("lam").get_to(s.lam);
  j.at("nu").get_to(s.nu);
}

}  // namespace cronos
