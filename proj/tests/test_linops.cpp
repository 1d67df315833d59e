#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "cronos/linops.hpp"
#include "oracle.hpp"

using cronos::GateSet;
using cronos::Matrix;

namespace {

std::vector<double> random_vector(cronos::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

GateSet single_mask(const Matrix& x, std::vector<std::uint8_t> mask) {
  GateSet gs;
  gs.n = x.rows();
  gs.d = x.cols();
  gs.requested = 1;
  gs.gates = Matrix(1, x.cols());
  gs.masks = {std::move(mask)};
  return gs;
}

}  // namespace

TEST(SampleGates, HandSignPatterns) {
  const Matrix x(2, 1, {1.0, -1.0});
  const auto pos = cronos::gate_set_from_gates(x, Matrix(1, 1, {1.0}));
  const auto neg = cronos::gate_set_from_gates(x, Matrix(1, 1, {-1.0}));
  EXPECT_EQ(pos.masks[0], (std::vector<std::uint8_t>{1, 0}));
  EXPECT_EQ(neg.masks[0], (std::vector<std::uint8_t>{0, 1}));
}

TEST(SampleGates, BoundaryIsInclusive) {
  const Matrix x(2, 2, {1.0, 1.0, 2.0, -1.0});
  const auto gs = cronos::gate_set_from_gates(x, Matrix(1, 2, {1.0, -1.0}));
  EXPECT_EQ(gs.masks[0][0], 1);  // 1 - 1 = 0 counts as active
  EXPECT_EQ(gs.masks[0][1], 1);
}

TEST(SampleGates, PositiveSingleFeatureHasAtMostTwoPatterns) {
  const Matrix x(5, 1, {0.5, 1.0, 2.0, 3.0, 4.0});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cronos::Rng rng(seed);
    const auto gs = cronos::sample_gates(x, 4, rng);
    EXPECT_LE(gs.patterns(), 2u);
    EXPECT_GE(gs.patterns(), 1u);
    EXPECT_EQ(gs.requested, 4u);
    for (const auto& m : gs.masks) {
      const bool all_on = std::all_of(m.begin(), m.end(), [](auto b) { return b == 1; });
      const bool all_off = std::all_of(m.begin(), m.end(), [](auto b) { return b == 0; });
      EXPECT_TRUE(all_on || all_off);
    }
  }
}

TEST(SampleGates, MasksAreUniqueAndRecomputable) {
  cronos::Rng rng(3);
  const Matrix x = cronos::gaussian_matrix(rng, 30, 4);
  for (auto sampling : {cronos::GateSampling::Gaussian, cronos::GateSampling::DataRow}) {
    const auto gs = cronos::sample_gates(x, 8, rng, sampling);
    EXPECT_EQ(gs.patterns(), 8u);
    EXPECT_EQ(gs.gates.rows(), gs.patterns());
    std::set<std::vector<std::uint8_t>> unique(gs.masks.begin(), gs.masks.end());
    EXPECT_EQ(unique.size(), gs.masks.size());
    EXPECT_EQ(cronos::compute_masks(x, gs.gates), gs.masks);
  }
}

TEST(SampleGates, DataRowGatesAreTrainingRows) {
  cronos::Rng rng(4);
  const Matrix x = cronos::gaussian_matrix(rng, 10, 3);
  const auto gs = cronos::sample_gates(x, 3, rng, cronos::GateSampling::DataRow);
  for (std::size_t i = 0; i < gs.patterns(); ++i) {
    bool found = false;
    for (std::size_t r = 0; r < x.rows(); ++r)
      found |= std::equal(x.row(r).begin(), x.row(r).end(), gs.gates.row(i).begin());
    EXPECT_TRUE(found);
  }
}

TEST(Operators, ZeroInputGivesZero) {
  cronos::Rng rng(5);
  const Matrix x = cronos::gaussian_matrix(rng, 6, 3);
  const auto gs = cronos::sample_gates(x, 2, rng);
  const std::vector<double> zero(gs.stacked_size(), 0.0);
  for (double v : cronos::apply_F(gs, x, zero)) EXPECT_EQ(v, 0.0);
  for (double v : cronos::apply_H(gs, x, 0.5, zero)) EXPECT_EQ(v, 0.0);
  for (double v : cronos::predict(gs, x, zero)) EXPECT_EQ(v, 0.0);
}

TEST(Operators, AllOnesMaskReducesToPlainProducts) {
  cronos::Rng rng(6);
  const Matrix x = cronos::gaussian_matrix(rng, 6, 3);
  const auto gs = single_mask(x, std::vector<std::uint8_t>(6, 1));
  const std::vector<double> v{1.0, -2.0, 0.5};
  const std::vector<double> w{0.25, 1.0, -1.0};
  std::vector<double> u(v);
  u.insert(u.end(), w.begin(), w.end());
  const auto fu = cronos::apply_F(gs, x, u);
  const auto ref = cronos::matvec(x, cronos::sub(v, w));
  for (std::size_t r = 0; r < 6; ++r) EXPECT_NEAR(fu[r], ref[r], 1e-14);
  const auto gu = cronos::apply_G(gs, x, u);
  const auto xv = cronos::matvec(x, v);
  const auto xw = cronos::matvec(x, w);
  for (std::size_t r = 0; r < 6; ++r) {
    EXPECT_NEAR(gu[r], xv[r], 1e-14);
    EXPECT_NEAR(gu[6 + r], xw[r], 1e-14);
  }
}

TEST(Operators, MatchDenseMaterializationAndAdjoints) {
  cronos::Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + rng.below(19);
    const std::size_t d = 1 + rng.below(6);
    const std::size_t p = 1 + rng.below(4);
    const Matrix x = cronos::gaussian_matrix(rng, n, d);
    const auto gs = cronos::sample_gates(x, p, rng);
    const oracle::Mat f = oracle::dense_F(gs, x);
    const oracle::Mat g = oracle::dense_G(gs, x);
    const double rho = 0.01 + rng.uniform();
    const auto u = random_vector(rng, gs.stacked_size());
    const auto w = random_vector(rng, gs.n);
    const auto z = random_vector(rng, gs.slack_size());
    const oracle::Vec ue = oracle::to_eigen(u);

    const oracle::Vec fu = f * ue;
    const oracle::Vec ftw = f.transpose() * oracle::to_eigen(w);
    const oracle::Vec gu = g * ue;
    const oracle::Vec gtz = g.transpose() * oracle::to_eigen(z);
    const oracle::Vec hu = (f.transpose() * f / rho + g.transpose() * g) * ue;
    EXPECT_LE((oracle::to_eigen(cronos::apply_F(gs, x, u)) - fu).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::to_eigen(cronos::apply_Ft(gs, x, w)) - ftw).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::to_eigen(cronos::apply_G(gs, x, u)) - gu).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::to_eigen(cronos::apply_Gt(gs, x, z)) - gtz).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::to_eigen(cronos::apply_H(gs, x, rho, u)) - hu).cwiseAbs().maxCoeff(),
              1e-10 * std::max(1.0, hu.cwiseAbs().maxCoeff()));

    const double xf = cronos::frobenius_norm(x);
    const double adj_f = std::fabs(cronos::dot(cronos::apply_F(gs, x, u), w) -
                                   cronos::dot(u, cronos::apply_Ft(gs, x, w)));
    const double adj_g = std::fabs(cronos::dot(cronos::apply_G(gs, x, u), z) -
                                   cronos::dot(u, cronos::apply_Gt(gs, x, z)));
    EXPECT_LE(adj_f, 1e-10 * cronos::norm2(u) * cronos::norm2(w) * xf);
    EXPECT_LE(adj_g, 1e-10 * cronos::norm2(u) * cronos::norm2(z) * xf);
    EXPECT_GE(cronos::dot(u, cronos::apply_H(gs, x, rho, u)), 0.0);
  }
}

TEST(Operators, DimensionMismatchThrows) {
  cronos::Rng rng(8);
  const Matrix x = cronos::gaussian_matrix(rng, 5, 2);
  const auto gs = cronos::sample_gates(x, 2, rng);
  EXPECT_THROW(cronos::apply_F(gs, x, std::vector<double>(3)), std::invalid_argument);
  EXPECT_THROW(cronos::apply_Ft(gs, x, std::vector<double>(4)), std::invalid_argument);
  EXPECT_THROW(cronos::apply_Gt(gs, x, std::vector<double>(1)), std::invalid_argument);
  EXPECT_THROW(cronos::apply_H(gs, x, 0.0, std::vector<double>(gs.stacked_size())),
               std::invalid_argument);
  EXPECT_THROW(cronos::predict(gs, Matrix(3, 5), std::vector<double>(gs.stacked_size())),
               std::invalid_argument);
}

TEST(Predict, OnTrainingRowsEqualsF) {
  cronos::Rng rng(9);
  const Matrix x = cronos::gaussian_matrix(rng, 12, 3);
  const auto gs = cronos::sample_gates(x, 3, rng);
  const auto u = random_vector(rng, gs.stacked_size());
  EXPECT_EQ(cronos::predict(gs, x, u), cronos::apply_F(gs, x, u));
}

TEST(Predict, HandComputedHeldOutRows) {
  const Matrix train(2, 2, {1.0, 0.0, 0.0, 1.0});
  const auto gs = cronos::gate_set_from_gates(train, Matrix(1, 2, {1.0, -1.0}));
  const std::vector<double> u{1.0, 2.0, 0.5, 0.0};  // v = (1, 2), w = (0.5, 0)
  const Matrix held(2, 2, {2.0, 1.0, 1.0, 3.0});
  const auto pred = cronos::predict(gs, held, u);
  EXPECT_DOUBLE_EQ(pred[0], 3.0);  // gate active: (2, 1)·(0.5, 2)
  EXPECT_DOUBLE_EQ(pred[1], 0.0);  // (1, 3)·(1, -1) < 0
}

TEST(SpectrumCheck, AllZeroAndAllOneMasks) {
  cronos::Rng rng(10);
  const Matrix x = cronos::gaussian_matrix(rng, 10, 4);
  const auto zero = cronos::spectrum_check(single_mask(x, std::vector<std::uint8_t>(10, 0)), x);
  EXPECT_TRUE(zero.dominated);
  for (double l : zero.f_blocks[0]) EXPECT_NEAR(l, 0.0, 1e-12);
  const auto ones = cronos::spectrum_check(single_mask(x, std::vector<std::uint8_t>(10, 1)), x);
  EXPECT_TRUE(ones.dominated);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(ones.f_blocks[0][j], ones.gram[j], 1e-10);
}

TEST(SpectrumCheck, RandomMasksAgainstEigenOracle) {
  cronos::Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = cronos::gaussian_matrix(rng, 10, 4);
    std::vector<std::uint8_t> mask(10);
    for (auto& b : mask) b = static_cast<std::uint8_t>(rng.below(2));
    const auto gs = single_mask(x, mask);
    const auto rep = cronos::spectrum_check(gs, x);
    EXPECT_TRUE(rep.dominated);
    const oracle::Mat xe = oracle::to_eigen(x);
    oracle::Mat fx = xe;
    oracle::Mat gx = xe;
    for (int r = 0; r < 10; ++r) {
      if (!mask[r]) {
        fx.row(r).setZero();
        gx.row(r) *= -1.0;
      }
    }
    const oracle::Vec lx = oracle::sym_eigenvalues_desc(xe.transpose() * xe);
    const oracle::Vec lf = oracle::sym_eigenvalues_desc(fx.transpose() * fx);
    const oracle::Vec lg = oracle::sym_eigenvalues_desc(gx.transpose() * gx);
    for (int j = 0; j < 4; ++j) {
      EXPECT_LE(lf(j), lx(j) + 1e-8);
      EXPECT_LE(lg(j), lx(j) + 1e-8);
      EXPECT_NEAR(rep.f_blocks[0][j], lf(j), 1e-9);
      EXPECT_NEAR(rep.gram[j], lx(j), 1e-9);
    }
  }
}

TEST(GateSetJson, RoundTripIsExact) {
  cronos::Rng rng(12);
  const Matrix x = cronos::gaussian_matrix(rng, 19, 3);
  const auto gs = cronos::sample_gates(x, 5, rng);
  const nlohmann::json j = gs;
  EXPECT_EQ(j.at("version").get<int>(), cronos::kGateSetVersion);
  const auto back = nlohmann::json::parse(j.dump()).get<GateSet>();
  EXPECT_EQ(back.n, gs.n);
  EXPECT_EQ(back.d, gs.d);
  EXPECT_EQ(back.requested, gs.requested);
  EXPECT_EQ(back.gates, gs.gates);
  EXPECT_EQ(back.masks, gs.masks);
}

TEST(GateSetJson, RejectsUnknownVersion) {
  cronos::Rng rng(13);
  const Matrix x = cronos::gaussian_matrix(rng, 4, 2);
  nlohmann::json j = cronos::sample_gates(x, 1, rng);
  j["version"] = 99;
  EXPECT_ANY_THROW(j.get<GateSet>());
}
