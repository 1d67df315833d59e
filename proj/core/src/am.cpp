#include "cronos/am.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace cronos {

namespace {

struct ForwardCache {
  std::vector<Matrix> pre;   // pre[l]  = A_{l} W_{l+1}ᵀ + b
  std::vector<Matrix> acts;  // acts[0] = input rows, acts[l+1] = ReLU(pre[l])
};

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  if (rows.empty()) return x;
  Matrix out(rows.size(), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.rows()) throw std::out_of_range("minibatch row index out of range");
    const auto src = x.row(rows[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  return out;
}

Matrix dense_forward(const DenseLayer& layer, const Matrix& a) {
  const std::size_t out_dim = layer.weight.rows();
  Matrix z(a.rows(), out_dim);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    for (std::size_t o = 0; o < out_dim; ++o) z(r, o) = dot(ar, layer.weight.row(o)) + layer.bias[o];
  }
  return z;
}

Matrix relu(Matrix z) {
  for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
  return z;
}

ForwardCache forward_cached(const MlpParams& params, Matrix input) {
  ForwardCache cache;
  cache.acts.push_back(std::move(input));
  for (const auto& layer : params.layers) {
    cache.pre.push_back(dense_forward(layer, cache.acts.back()));
    cache.acts.push_back(relu(cache.pre.back()));
  }
  return cache;
}

// Per-row head coefficient c_j = Σ_i D_i[j] (u_i - u_{P+i}) for the given
// global rows; the head output is x̃_jᵀ c_j.
Matrix head_coefficients(const GateSet& gs, std::span<const double> u,
                         std::span<const std::size_t> rows) {
  const std::size_t p = gs.patterns();
  const std::size_t d = gs.d;
  const std::size_t count = rows.empty() ? gs.n : rows.size();
  Matrix c(count, d);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t j = rows.empty() ? k : rows[k];
    auto cj = c.row(k);
    for (std::size_t i = 0; i < p; ++i) {
      if (!gs.masks[i][j]) continue;
      for (std::size_t t = 0; t < d; ++t) cj[t] += u[i * d + t] - u[(p + i) * d + t];
    }
  }
  return c;
}

void check_head(const MlpParams& params, const Matrix& x, std::span<const double> y,
                const GateSet& gs, std::span<const double> u) {
  params.validate();
  if (x.cols() != params.input_dim())
    throw std::invalid_argument("am: data width does not match the first layer");
  if (gs.d != params.output_dim() || gs.n != x.rows())
    throw std::invalid_argument("am: gate set does not match the transformed data");
  if (y.size() != x.rows()) throw std::invalid_argument("am: label count mismatch");
  if (u.size() != gs.stacked_size()) throw std::invalid_argument("am: u has the wrong length");
}

double weight_sq_norm(const MlpParams& params) {
  double acc = 0.0;
  for (const auto& l : params.layers) acc += dot(l.weight.data(), l.weight.data());
  return acc;
}

}  // namespace

void MlpParams::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows())
      throw std::invalid_argument("MlpParams: bias length mismatch in layer " + std::to_string(l));
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows())
      throw std::invalid_argument("MlpParams: layer " + std::to_string(l) +
                                  " does not chain with the previous layer");
    for (double w : layer.weight.data())
      if (!std::isfinite(w)) throw std::invalid_argument("MlpParams: non-finite weight");
  }
}

std::size_t MlpParams::input_dim() const {
  if (layers.empty()) throw std::logic_error("MlpParams: no layers");
  return layers.front().weight.cols();
}

std::size_t MlpParams::output_dim() const {
  if (layers.empty()) throw std::logic_error("MlpParams: no layers");
  return layers.back().weight.rows();
}

std::size_t MlpParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.weight.rows() * l.weight.cols() + l.bias.size();
  return total;
}

MlpParams init_mlp(std::span<const std::size_t> widths, Rng& rng) {
  if (widths.empty()) throw std::invalid_argument("init_mlp: need at least the input width");
  MlpParams params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    if (in == 0 || out == 0) throw std::invalid_argument("init_mlp: zero width");
    DenseLayer layer{gaussian_matrix(rng, out, in), std::vector<double>(out, 0.0)};
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : layer.weight.data()) w *= scale;
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix mlp_forward(const MlpParams& params, const Matrix& x) {
  params.validate();
  if (params.layers.empty()) return x;
  if (x.cols() != params.input_dim())
    throw std::invalid_argument("mlp_forward: expected " + std::to_string(params.input_dim()) +
                                " input features, got " + std::to_string(x.cols()));
  Matrix a = x;
  for (const auto& layer : params.layers) a = relu(dense_forward(layer, a));
  return a;
}

std::vector<double> flatten(const MlpParams& params) {
  std::vector<double> flat;
  flat.reserve(params.parameter_count());
  for (const auto& l : params.layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void unflatten(std::span<const double> flat, MlpParams& params) {
  if (flat.size() != params.parameter_count())
    throw std::invalid_argument("unflatten: parameter count mismatch");
  std::size_t pos = 0;
  for (auto& l : params.layers) {
    auto w = l.weight.data();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), w.size(), w.begin());
    pos += w.size();
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), l.bias.size(), l.bias.begin());
    pos += l.bias.size();
  }
}

double am_inner_objective(const MlpParams& params, const Matrix& x, std::span<const double> y,
                          const GateSet& gs, std::span<const double> u, double alpha,
                          std::span<const std::size_t> rows) {
  check_head(params, x, y, gs, u);
  const Matrix xt = mlp_forward(params, select_rows(x, rows));
  const Matrix c = head_coefficients(gs, u, rows);
  const double scale = static_cast<double>(x.rows()) / static_cast<double>(xt.rows());
  double acc = 0.0;
  for (std::size_t k = 0; k < xt.rows(); ++k) {
    const double target = y[rows.empty() ? k : rows[k]];
    const double r = dot(xt.row(k), c.row(k)) - target;
    acc += r * r;
  }
  return scale * acc + 0.5 * alpha * weight_sq_norm(params);
}

MlpParams am_inner_grad(const MlpParams& params, const Matrix& x, std::span<const double> y,
                        const GateSet& gs, std::span<const double> u, double alpha,
                        std::span<const std::size_t> rows) {
  check_head(params, x, y, gs, u);
  const ForwardCache cache = forward_cached(params, select_rows(x, rows));
  const Matrix& xt = cache.acts.back();
  const Matrix c = head_coefficients(gs, u, rows);
  const double scale = static_cast<double>(x.rows()) / static_cast<double>(xt.rows());

  // dJ/dX̃_j = 2 scale r_j c_j
  Matrix upstream(xt.rows(), xt.cols());
  for (std::size_t k = 0; k < xt.rows(); ++k) {
    const double target = y[rows.empty() ? k : rows[k]];
    const double r = dot(xt.row(k), c.row(k)) - target;
    axpy(2.0 * scale * r, c.row(k), upstream.row(k));
  }

  MlpParams grad = params;
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Matrix& z = cache.pre[l];
    const Matrix& a_prev = cache.acts[l];
    for (std::size_t i = 0; i < upstream.data().size(); ++i)
      if (!(z.data()[i] > 0.0)) upstream.data()[i] = 0.0;

    auto& g = grad.layers[l];
    g.weight = matmul_tn(upstream, a_prev);
    axpy(alpha, params.layers[l].weight.data(), g.weight.data());
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
    for (std::size_t r = 0; r < upstream.rows(); ++r) axpy(1.0, upstream.row(r), g.bias);

    if (l > 0) upstream = matmul(upstream, params.layers[l].weight);
  }
  return grad;
}

void dadapt_adam_step(DAdaptAdamState& st, std::span<const double> grad,
                      std::span<double> params) {
  if (grad.size() != params.size()) throw std::invalid_argument("dadapt_adam_step: size mismatch");
  if (st.exp_avg.empty()) {
    st.exp_avg.assign(params.size(), 0.0);
    st.exp_avg_sq.assign(params.size(), 0.0);
    st.s.assign(params.size(), 0.0);
  } else if (st.exp_avg.size() != params.size()) {
    throw std::invalid_argument("dadapt_adam_step: state was sized for other parameters");
  }

  const double sqrt_beta2 = std::sqrt(st.beta2);
  const double dlr = st.d * st.lr;
  double numerator_acc = 0.0;
  double sk_l1 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double denom = std::sqrt(st.exp_avg_sq[i]) + st.eps;
    numerator_acc += dlr * grad[i] * st.s[i] / denom;
    st.exp_avg[i] = st.exp_avg[i] * st.beta1 + dlr * (1.0 - st.beta1) * grad[i];
    st.exp_avg_sq[i] = st.exp_avg_sq[i] * st.beta2 + (1.0 - st.beta2) * grad[i] * grad[i];
    st.s[i] = st.s[i] * sqrt_beta2 + dlr * (1.0 - sqrt_beta2) * grad[i];
    sk_l1 += std::fabs(st.s[i]);
  }
  const double numerator_weighted =
      sqrt_beta2 * st.numerator_weighted + (1.0 - sqrt_beta2) * numerator_acc;
  if (sk_l1 == 0.0) return;

  if (st.lr > 0.0) {
    const double d_hat = numerator_weighted / ((1.0 - sqrt_beta2) * sk_l1);
    st.d = std::max(st.d, std::min(d_hat, st.d * st.growth_rate));
  }
  st.numerator_weighted = numerator_weighted;
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i] -= st.exp_avg[i] / (std::sqrt(st.exp_avg_sq[i]) + st.eps);
  ++st.step;
}

void adam_step(AdamState& st, std::span<const double> grad, std::span<double> params) {
  if (grad.size() != params.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (st.m.empty()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
  }
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    params[i] -= st.lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + st.eps);
  }
}

void AmConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("AmConfig: " + m); };
  if (!(alpha >= 0.0)) fail("alpha must be non-negative");
  if (outer_iters < 1) fail("outer_iters must be >= 1");
  if (cronos_iters_per_outer < 1) fail("cronos_iters_per_outer must be >= 1");
  if (minibatch < 1) fail("minibatch must be >= 1");
  if (!(adam_lr > 0.0)) fail("adam_lr must be positive");
}

void to_json(nlohmann::json& j, const AmConfig& c) {
  j = nlohmann::json{
      {"alpha", c.alpha},
      {"outer_iters", c.outer_iters},
      {"cronos_iters_per_outer", c.cronos_iters_per_outer},
      {"inner_epochs", c.inner_epochs},
      {"minibatch", c.minibatch},
      {"optimizer", c.optimizer == InnerOptimizer::DAdaptAdam ? "dadapt_adam" : "adam_fixed_lr"},
      {"adam_lr", c.adam_lr},
      {"freeze_gates", c.freeze_gates},
      {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AmConfig& c) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("alpha", c.alpha);
  read("outer_iters", c.outer_iters);
  read("cronos_iters_per_outer", c.cronos_iters_per_outer);
  read("inner_epochs", c.inner_epochs);
  read("minibatch", c.minibatch);
  if (j.contains("optimizer")) {
    const auto s = j.at("optimizer").get<std::string>();
    if (s == "dadapt_adam") c.optimizer = InnerOptimizer::DAdaptAdam;
    else if (s == "adam_fixed_lr") c.optimizer = InnerOptimizer::AdamFixedLr;
    else throw std::invalid_argument("AmConfig: unknown optimizer '" + s + "'");
  }
  read("adam_lr", c.adam_lr);
  read("freeze_gates", c.freeze_gates);
  read("seed", c.seed);
}

std::vector<double> am_predict(const MlpParams& params, const GateSet& gs,
                               std::span<const double> u, const Matrix& x) {
  return predict(gs, mlp_forward(params, x), u);
}

double sign_accuracy(std::span<const double> pred, std::span<const double> y) {
  if (pred.size() != y.size()) throw std::invalid_argument("sign_accuracy: size mismatch");
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double label = pred[i] >= 0.0 ? 1.0 : -1.0;
    if (label == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

AmResult cronos_am_solve(const Matrix& x, std::span<const double> y,
                         std::span<const std::size_t> widths, const SolverConfig& cfg,
                         const AmConfig& am, const Matrix* x_val, std::span<const double> y_val,
                         const OuterObserver& observer) {
  cfg.validate();
  am.validate();
  if (widths.empty() || widths.front() != x.cols())
    throw std::invalid_argument("cronos_am_solve: widths must start with the feature count");
  if (y.size() != x.rows()) throw std::invalid_argument("cronos_am_solve: label count mismatch");
  if (x_val && y_val.size() != x_val->rows())
    throw std::invalid_argument("cronos_am_solve: validation label count mismatch");

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  Rng rng(am.seed);
  AmResult out;

  auto finish_record = [&](OuterRecord rec) {
    rec.train_acc = sign_accuracy(am_predict(out.params, out.gates, out.state.u, x), y);
    rec.val_acc = x_val ? sign_accuracy(am_predict(out.params, out.gates, out.state.u, *x_val),
                                        y_val)
                        : std::nan("");
    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    out.outer.push_back(rec);
    if (observer) observer(rec);
  };

  if (widths.size() == 1) {
    // No inner layers: the head sees the raw data.
    out.gates = sample_gates(x, cfg.patterns, rng, cfg.gate_sampling);
    auto res = cronos_solve(x, y, out.gates, cfg);
    out.state = std::move(res.state);
    out.history = std::move(res.history);
    OuterRecord rec;
    rec.outer = 1;
    const auto& last = out.history.records.back();
    rec.obj = last.obj;
    rec.resid_uv = last.resid_uv;
    rec.resid_gus = last.resid_gus;
    for (const auto& r : out.history.records) rec.pcg_iters += r.pcg_iters;
    finish_record(rec);
    return out;
  }

  out.params = init_mlp(widths, rng);
  SolverConfig inner_cfg = cfg;
  inner_cfg.admm_iters = am.cronos_iters_per_outer;

  DAdaptAdamState dadapt;
  AdamState adam;
  adam.lr = am.adam_lr;
  std::vector<std::size_t> order(x.rows());

  for (std::size_t t = 1; t <= am.outer_iters; ++t) {
    const Matrix xt = mlp_forward(out.params, x);
    const ConvexState* warm = nullptr;
    std::size_t prior = 0;
    if (t == 1 || !am.freeze_gates) {
      out.gates = sample_gates(xt, cfg.patterns, rng, cfg.gate_sampling);
    } else {
      // Same gates, masks refreshed on the new features; warm start is valid.
      out.gates.masks = compute_masks(xt, out.gates.gates);
      warm = &out.state;
      prior = out.history.records.size();
    }
    auto res = cronos_solve(xt, y, out.gates, inner_cfg, SolveOptions{warm, {}, prior});
    const std::size_t offset = out.history.records.size();
    for (auto r : res.history.records) {
      r.iter += offset;
      out.history.records.push_back(r);
    }
    out.state = std::move(res.state);

    OuterRecord rec;
    rec.outer = t;
    rec.resid_uv = res.history.records.back().resid_uv;
    rec.resid_gus = res.history.records.back().resid_gus;
    for (const auto& r : res.history.records) rec.pcg_iters += r.pcg_iters;

    for (std::size_t epoch = 0; epoch < am.inner_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
      for (std::size_t begin = 0; begin < order.size(); begin += am.minibatch) {
        const std::size_t end = std::min(order.size(), begin + am.minibatch);
        const std::span<const std::size_t> batch(order.data() + begin, end - begin);
        const auto grad = flatten(am_inner_grad(out.params, x, y, out.gates, out.state.u,
                                                am.alpha, batch));
        auto flat = flatten(out.params);
        if (am.optimizer == InnerOptimizer::DAdaptAdam) {
          dadapt_adam_step(dadapt, grad, flat);
        } else {
          adam_step(adam, grad, flat);
        }
        unflatten(flat, out.params);
      }
    }

    rec.obj = am_inner_objective(out.params, x, y, out.gates, out.state.u, am.alpha) +
              cfg.beta * group_norm(out.state.v, out.gates.d);
    finish_record(rec);
  }
  return out;
}

void to_json(nlohmann::json& j, const MlpParams& p) {
  j = nlohmann::json::array();
  for (const auto& l : p.layers) {
    const auto w = l.weight.data();
    j.push_back({{"rows", l.weight.rows()},
                 {"cols", l.weight.cols()},
                 {"weight", std::vector<double>(w.begin(), w.end())},
                 {"bias", l.bias}});
  }
}

void from_json(const nlohmann::json& j, MlpParams& p) {
  p.layers.clear();
  for (const auto& item : j) {
    const auto rows = item.at("rows").get<std::size_t>();
    const auto cols = item.at("cols").get<std::size_t>();
    DenseLayer layer{Matrix(rows, cols, item.at("weight").get<std::vector<double>>()),
                     item.at("bias").get<std::vector<double>>()};
    p.layers.push_back(std::move(layer));
  }
  p.validate();
}

}  // namespace cronos
