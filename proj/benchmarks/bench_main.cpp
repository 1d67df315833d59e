#include <benchmark/benchmark.h>

#include <vector>

#include "cronos/nystrom.hpp"
#include "cronos/solver.hpp"

namespace {

struct Instance {
  cronos::Matrix x;
  std::vector<double> y;
  cronos::GateSet gs;
};

Instance make_instance(std::size_t n, std::size_t d, std::size_t p) {
  cronos::Rng rng(1);
  Instance in;
  in.x = cronos::gaussian_matrix(rng, n, d);
  in.y.resize(n);
  for (double& v : in.y) v = rng.normal() >= 0.0 ? 1.0 : -1.0;
  in.gs = cronos::sample_gates(in.x, p, rng);
  return in;
}

void BM_ApplyH(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto in = make_instance(n, 20, 10);
  std::vector<double> u(in.gs.stacked_size(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(cronos::apply_H(in.gs, in.x, 0.01, u));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_ApplyH)->Arg(256)->Arg(1024)->Arg(4096);

void BM_RandNystrom(benchmark::State& state) {
  const auto in = make_instance(1024, 20, 10);
  const auto rank = static_cast<std::size_t>(state.range(0));
  const cronos::LinearOperator op = [&](std::span<const double> p) {
    return cronos::apply_H(in.gs, in.x, 0.01, p);
  };
  for (auto _ : state) {
    cronos::Rng rng(2);
    benchmark::DoNotOptimize(cronos::rand_nystrom(op, in.gs.stacked_size(), rank, rng));
  }
}
BENCHMARK(BM_RandNystrom)->Arg(10)->Arg(20)->Arg(50);

void BM_NystromPcg(benchmark::State& state) {
  const auto in = make_instance(1024, 20, 10);
  const std::size_t dim = in.gs.stacked_size();
  const cronos::LinearOperator h = [&](std::span<const double> p) {
    return cronos::apply_H(in.gs, in.x, 0.01, p);
  };
  const cronos::LinearOperator sys = [&](std::span<const double> p) {
    auto out = h(p);
    cronos::axpy(1.0, p, out);
    return out;
  };
  cronos::Rng rng(3);
  const auto ap = cronos::rand_nystrom(h, dim, static_cast<std::size_t>(state.range(0)), rng);
  const auto b = cronos::scaled(100.0, cronos::apply_Ft(in.gs, in.x, in.y));
  const std::vector<double> x0(dim, 0.0);
  std::size_t iters = 0;
  for (auto _ : state) {
    const auto res = cronos::nystrom_pcg(sys, b, x0, ap, 1e-6 * cronos::norm2(b), 200);
    iters = res.report.iterations;
    benchmark::DoNotOptimize(res.x);
  }
  state.counters["pcg_iters"] = static_cast<double>(iters);
}
BENCHMARK(BM_NystromPcg)->Arg(5)->Arg(20)->Arg(50);

void BM_CronosSolve(benchmark::State& state) {
  const auto in = make_instance(static_cast<std::size_t>(state.range(0)), 20, 10);
  cronos::SolverConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(cronos::cronos_solve(in.x, in.y, in.gs, cfg));
}
BENCHMARK(BM_CronosSolve)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
