#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <nlohmann/json.hpp>

#include "cronos/am.hpp"
#include "cronos/data.hpp"
#include "oracle.hpp"

using cronos::Matrix;

namespace {

struct TinyCase {
  cronos::MlpParams params;
  Matrix x;
  std::vector<double> y;
  cronos::GateSet gs;
  std::vector<double> u;
};

TinyCase tiny_case(std::uint64_t seed) {
  cronos::Rng rng(seed);
  const std::size_t n = 5 + rng.below(4);
  const std::size_t d = 2 + rng.below(3);
  std::vector<std::size_t> widths{d, 2 + rng.below(3)};
  if (rng.uniform() < 0.5) widths.push_back(2 + rng.below(2));
  TinyCase tc;
  tc.params = cronos::init_mlp(widths, rng);
  for (auto& layer : tc.params.layers)
    for (double& b : layer.bias) b = 0.3 * rng.normal();
  tc.x = cronos::gaussian_matrix(rng, n, d);
  tc.y.resize(n);
  for (double& v : tc.y) v = rng.normal();
  tc.gs = cronos::sample_gates(cronos::mlp_forward(tc.params, tc.x), 3, rng);
  tc.u.resize(tc.gs.stacked_size());
  for (double& v : tc.u) v = rng.normal();
  return tc;
}

}  // namespace

TEST(Mlp, ForwardHandExample) {
  cronos::MlpParams p;
  p.layers.push_back({Matrix(2, 2, {1.0, -1.0, 2.0, 0.5}), {0.0, -1.0}});
  const Matrix x(2, 2, {1.0, 2.0, -1.0, 1.0});
  const Matrix out = cronos::mlp_forward(p, x);
  // rows: [1-2, 2+1-1] = [-1, 2] -> [0, 2]; [-1-1, -2+0.5-1] -> [0, 0]
  EXPECT_EQ(out, Matrix(2, 2, {0.0, 2.0, 0.0, 0.0}));
}

TEST(Mlp, EmptyNetworkIsIdentity) {
  cronos::Rng rng(1);
  const Matrix x = cronos::gaussian_matrix(rng, 4, 3);
  EXPECT_EQ(cronos::mlp_forward(cronos::MlpParams{}, x), x);
}

TEST(Mlp, InitShapesAndScale) {
  cronos::Rng rng(2);
  const std::vector<std::size_t> widths{50, 200, 10};
  const auto p = cronos::init_mlp(widths, rng);
  ASSERT_EQ(p.layers.size(), 2u);
  EXPECT_EQ(p.input_dim(), 50u);
  EXPECT_EQ(p.output_dim(), 10u);
  EXPECT_EQ(p.parameter_count(), 50u * 200u + 200u + 200u * 10u + 10u);
  double ss = 0.0;
  for (double w : p.layers[0].weight.data()) ss += w * w;
  EXPECT_NEAR(ss / (50.0 * 200.0), 2.0 / 50.0, 0.004);
  for (double b : p.layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Mlp, ValidateRejectsBrokenChains) {
  cronos::MlpParams p;
  p.layers.push_back({Matrix(3, 2), std::vector<double>(3, 0.0)});
  p.layers.push_back({Matrix(2, 4), std::vector<double>(2, 0.0)});
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Mlp, FlattenRoundTrip) {
  const auto tc = tiny_case(3);
  const auto flat = cronos::flatten(tc.params);
  EXPECT_EQ(flat.size(), tc.params.parameter_count());
  cronos::MlpParams copy = tc.params;
  for (auto& l : copy.layers) std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0);
  cronos::unflatten(flat, copy);
  EXPECT_EQ(copy, tc.params);
}

TEST(InnerGrad, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto tc = tiny_case(1000 + seed);
    const double alpha = 0.01;
    const auto grad = cronos::flatten(
        cronos::am_inner_grad(tc.params, tc.x, tc.y, tc.gs, tc.u, alpha));
    auto flat = cronos::flatten(tc.params);
    cronos::MlpParams probe = tc.params;
    double worst = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double h = 1e-6;
      const double keep = flat[i];
      flat[i] = keep + h;
      cronos::unflatten(flat, probe);
      const double fp = cronos::am_inner_objective(probe, tc.x, tc.y, tc.gs, tc.u, alpha);
      flat[i] = keep - h;
      cronos::unflatten(flat, probe);
      const double fm = cronos::am_inner_objective(probe, tc.x, tc.y, tc.gs, tc.u, alpha);
      flat[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::fabs(fd - grad[i]) / std::max(1.0, std::fabs(fd)));
    }
    EXPECT_LE(worst, 1e-5) << "seed " << seed;
  }
}

TEST(InnerGrad, MinibatchScalesToFullObjective) {
  const auto tc = tiny_case(4);
  std::vector<std::size_t> all(tc.x.rows());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  EXPECT_DOUBLE_EQ(cronos::am_inner_objective(tc.params, tc.x, tc.y, tc.gs, tc.u, 0.1, all),
                   cronos::am_inner_objective(tc.params, tc.x, tc.y, tc.gs, tc.u, 0.1));
}

TEST(InnerGrad, ZeroHeadLeavesOnlyDecay) {
  auto tc = tiny_case(5);
  std::fill(tc.u.begin(), tc.u.end(), 0.0);
  std::fill(tc.y.begin(), tc.y.end(), 0.0);
  const double alpha = 0.3;
  const auto g = cronos::am_inner_grad(tc.params, tc.x, tc.y, tc.gs, tc.u, alpha);
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const auto gw = g.layers[l].weight.data();
    const auto w = tc.params.layers[l].weight.data();
    for (std::size_t i = 0; i < gw.size(); ++i) EXPECT_DOUBLE_EQ(gw[i], alpha * w[i]);
    for (double b : g.layers[l].bias) EXPECT_EQ(b, 0.0);
  }
  EXPECT_DOUBLE_EQ(cronos::am_inner_objective(tc.params, tc.x, tc.y, tc.gs, tc.u, 0.0), 0.0);
}

TEST(InnerGrad, DeadNetworkHasNoDataGradient) {
  auto tc = tiny_case(6);
  for (auto& b : tc.params.layers.back().bias) b = -1e6;  // last ReLU always off
  const auto g = cronos::am_inner_grad(tc.params, tc.x, tc.y, tc.gs, tc.u, 0.0);
  for (const auto& l : g.layers) {
    for (double v : l.weight.data()) EXPECT_EQ(v, 0.0);
    for (double v : l.bias) EXPECT_EQ(v, 0.0);
  }
}

TEST(InnerGrad, WeightDecayIncreasesObjectiveMonotonically) {
  const auto tc = tiny_case(7);
  double prev = -1.0;
  for (double alpha : {0.0, 0.1, 1.0, 10.0}) {
    const double v = cronos::am_inner_objective(tc.params, tc.x, tc.y, tc.gs, tc.u, alpha);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(DAdaptAdam, ZeroGradientIsANoOp) {
  cronos::DAdaptAdamState st;
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  for (int i = 0; i < 5; ++i) cronos::dadapt_adam_step(st, g, p);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(st.d, 1e-6);
}

TEST(DAdaptAdam, FirstStepMovesAgainstGradient) {
  cronos::DAdaptAdamState st;
  std::vector<double> p{0.5, 0.5, 0.5};
  const std::vector<double> g{1.0, -3.0, 0.0};
  cronos::dadapt_adam_step(st, g, p);
  EXPECT_LT(p[0], 0.5);
  EXPECT_GT(p[1], 0.5);
  EXPECT_EQ(p[2], 0.5);
}

TEST(DAdaptAdam, StepSizeEstimateNeverShrinks) {
  cronos::DAdaptAdamState st;
  std::vector<double> w{10.0};
  double prev_d = st.d;
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> g{w[0]};
    cronos::dadapt_adam_step(st, g, w);
    EXPECT_GE(st.d, prev_d);
    prev_d = st.d;
  }
}

TEST(DAdaptAdam, ReachesMinimumOfQuadratic) {
  cronos::DAdaptAdamState st;
  std::vector<double> w{10.0};
  int hit = -1;
  for (int k = 0; k < 500 && hit < 0; ++k) {
    const std::vector<double> g{w[0]};
    cronos::dadapt_adam_step(st, g, w);
    if (std::fabs(w[0]) < 1.0) hit = k;
  }
  EXPECT_GE(hit, 0);
  EXPECT_LT(hit, 100);
}

TEST(Adam, BiasCorrectedFirstStepIsLr) {
  cronos::AdamState st;
  st.lr = 0.1;
  std::vector<double> p{1.0, 1.0};
  const std::vector<double> g{2.0, -5.0};
  cronos::adam_step(st, g, p);
  EXPECT_NEAR(p[0], 0.9, 1e-7);
  EXPECT_NEAR(p[1], 1.1, 1e-7);
}

TEST(AmConfig, JsonAndValidation) {
  cronos::AmConfig cfg;
  cfg.optimizer = cronos::InnerOptimizer::AdamFixedLr;
  cfg.outer_iters = 3;
  cfg.freeze_gates = true;
  const nlohmann::json j = cfg;
  EXPECT_EQ(j.at("optimizer"), "adam_fixed_lr");
  const auto back = j.get<cronos::AmConfig>();
  EXPECT_EQ(back.optimizer, cronos::InnerOptimizer::AdamFixedLr);
  EXPECT_EQ(back.outer_iters, 3u);
  EXPECT_TRUE(back.freeze_gates);
  cfg.minibatch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW((nlohmann::json{{"optimizer", "sgd"}}.get<cronos::AmConfig>()), std::exception);
}

TEST(SignAccuracy, ZeroCountsAsPositive) {
  const std::vector<double> pred{0.0, -0.1, 2.0, 0.0};
  const std::vector<double> y{1.0, -1.0, -1.0, -1.0};
  EXPECT_DOUBLE_EQ(cronos::sign_accuracy(pred, y), 0.5);
}

TEST(CronosAm, DepthTwoReducesToCronos) {
  cronos::Rng rng(8);
  const Matrix x = cronos::gaussian_matrix(rng, 30, 4);
  std::vector<double> y(30);
  for (double& v : y) v = rng.normal() >= 0 ? 1.0 : -1.0;
  cronos::SolverConfig cfg;
  cfg.admm_iters = 12;
  cronos::AmConfig am;
  am.seed = 77;
  const std::vector<std::size_t> widths{4};
  const auto res = cronos::cronos_am_solve(x, y, widths, cfg, am);

  cronos::Rng gate_rng(77);
  const auto gs = cronos::sample_gates(x, cfg.patterns, gate_rng, cfg.gate_sampling);
  const auto ref = cronos::cronos_solve(x, y, gs, cfg);
  ASSERT_EQ(res.state.u.size(), ref.state.u.size());
  for (std::size_t i = 0; i < ref.state.u.size(); ++i)
    EXPECT_NEAR(res.state.u[i], ref.state.u[i], 1e-12);
  EXPECT_TRUE(res.params.layers.empty());
  EXPECT_EQ(res.outer.size(), 1u);
  EXPECT_EQ(res.history.records.size(), 12u);
}

TEST(CronosAm, FrozenGatesWithoutInnerStepsContinueOneSolve) {
  // With fixed gates and no inner steps every outer iteration resumes the
  // same convex problem, so the result equals one long CRONOS run.
  const auto ds = cronos::gen_synthetic(cronos::SyntheticKind::Blobs, 120, 6, 1.0, 21);
  cronos::SolverConfig cfg;
  cronos::AmConfig am;
  am.freeze_gates = true;
  am.inner_epochs = 0;
  am.outer_iters = 8;
  am.seed = 3;
  const std::vector<std::size_t> widths{6, 8, 8};
  const auto res = cronos::cronos_am_solve(ds.x_train, ds.y_train, widths, cfg, am);
  ASSERT_EQ(res.outer.size(), 8u);
  for (std::size_t k = 0; k < res.history.records.size(); ++k)
    EXPECT_EQ(res.history.records[k].iter, k + 1);

  const Matrix xt = cronos::mlp_forward(res.params, ds.x_train);
  const auto gs = cronos::gate_set_from_gates(xt, res.gates.gates);
  auto long_cfg = cfg;
  long_cfg.admm_iters = am.outer_iters * am.cronos_iters_per_outer;
  const auto ref = cronos::cronos_solve(xt, ds.y_train, gs, long_cfg);
  for (std::size_t i = 0; i < ref.state.u.size(); ++i)
    EXPECT_NEAR(res.state.u[i], ref.state.u[i], 1e-12);
  for (std::size_t k = 0; k < ref.history.records.size(); ++k)
    EXPECT_NEAR(res.history.records[k].obj, ref.history.records[k].obj,
                1e-12 * std::max(1.0, ref.history.records[k].obj));
}

TEST(CronosAm, BlobsEndToEnd) {
  const auto ds = cronos::gen_synthetic(cronos::SyntheticKind::Blobs, 200, 8, 1.0, 5);
  cronos::SolverConfig cfg;
  cronos::AmConfig am;
  am.outer_iters = 5;
  am.seed = 9;
  const std::vector<std::size_t> widths{8, 12, 12};
  std::size_t seen = 0;
  const auto res = cronos::cronos_am_solve(ds.x_train, ds.y_train, widths, cfg, am, &ds.x_test,
                                           ds.y_test,
                                           [&](const cronos::OuterRecord& r) {
                                             EXPECT_EQ(r.outer, ++seen);
                                             EXPECT_FALSE(std::isnan(r.val_acc));
                                           });
  EXPECT_EQ(seen, 5u);
  EXPECT_GE(res.outer.back().train_acc, 0.9);
  const auto pred = cronos::am_predict(res.params, res.gates, res.state.u, ds.x_test);
  EXPECT_DOUBLE_EQ(cronos::sign_accuracy(pred, ds.y_test), res.outer.back().val_acc);
}

TEST(CronosAm, RejectsMismatchedWidths) {
  const Matrix x(4, 3, 1.0);
  const std::vector<double> y(4, 1.0);
  const std::vector<std::size_t> widths{2, 4};
  EXPECT_THROW(cronos::cronos_am_solve(x, y, widths, {}, {}), std::invalid_argument);
}

TEST(MlpJson, RoundTripIsExact) {
  const auto tc = tiny_case(9);
  const nlohmann::json j = tc.params;
  EXPECT_EQ(nlohmann::json::parse(j.dump()).get<cronos::MlpParams>(), tc.params);
}
