#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cronos/checkpoint.hpp"
#include "cronos/run.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cronos_run_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

cronos::RunConfig small_config(const fs::path& out) {
  cronos::RunConfig cfg;
  cfg.data.n = 120;
  cfg.data.d = 5;
  cfg.solver.admm_iters = 8;
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST(RunConfig, ParsesNestedSectionsAndRejectsUnknownKeys) {
  const auto j = nlohmann::json::parse(R"({
    "task": "cronos-am", "seed": 4, "hidden": [8, 8],
    "data": {"synthetic": "planted-relu", "n": 50},
    "solver": {"rho": 0.1, "gamma": 0.2},
    "am": {"outer_iters": 2, "optimizer": "adam_fixed_lr"}
  })");
  const auto cfg = j.get<cronos::RunConfig>();
  EXPECT_EQ(cfg.task, cronos::Task::CronosAm);
  EXPECT_EQ(cfg.seed, 4u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{8, 8}));
  EXPECT_EQ(cfg.data.synthetic, "planted-relu");
  EXPECT_EQ(cfg.data.n, 50u);
  EXPECT_EQ(cfg.data.d, 10u);
  EXPECT_EQ(cfg.solver.rho, 0.1);
  EXPECT_EQ(cfg.solver.gamma, 0.2);
  EXPECT_EQ(cfg.am.outer_iters, 2u);

  EXPECT_ANY_THROW(nlohmann::json::parse(R"({"rhoo": 1})").get<cronos::RunConfig>());
  EXPECT_ANY_THROW(nlohmann::json::parse(R"({"solver": {"rhoo": 1}})").get<cronos::RunConfig>());
  EXPECT_ANY_THROW(nlohmann::json::parse(R"({"task": "sgd"})").get<cronos::RunConfig>());
}

TEST(RunConfig, OverridesByBareKey) {
  cronos::RunConfig cfg;
  cronos::apply_override(cfg, "rho", "0.25");
  cronos::apply_override(cfg, "outer_iters", "3");
  cronos::apply_override(cfg, "train_path", "/tmp/x.csv");
  cronos::apply_override(cfg, "hidden", "4,5");
  cronos::apply_override(cfg, "seed", "11");
  cronos::apply_override(cfg, "task", "cronos-general");
  EXPECT_EQ(cfg.solver.rho, 0.25);
  EXPECT_EQ(cfg.am.outer_iters, 3u);
  EXPECT_EQ(cfg.data.train_path, "/tmp/x.csv");
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{4, 5}));
  EXPECT_EQ(cfg.seed, 11u);
  EXPECT_EQ(cfg.task, cronos::Task::CronosGeneral);
  EXPECT_THROW(cronos::apply_override(cfg, "nope", "1"), std::invalid_argument);
  EXPECT_THROW(cronos::apply_override(cfg, "rho", "abc"), std::invalid_argument);

  const auto keys = cronos::override_keys();
  for (const char* k : {"rho", "beta", "outer_iters", "synthetic", "seed", "timing"})
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
}

TEST(RunConfig, EnvironmentOverrides) {
  ::setenv("CRONOS_ADMM_ITERS", "17", 1);
  ::setenv("CRONOS_GATE_SAMPLING", "data-row", 1);
  cronos::RunConfig cfg;
  cronos::apply_env_overrides(cfg);
  ::unsetenv("CRONOS_ADMM_ITERS");
  ::unsetenv("CRONOS_GATE_SAMPLING");
  EXPECT_EQ(cfg.solver.admm_iters, 17u);
  EXPECT_EQ(cfg.solver.gate_sampling, cronos::GateSampling::DataRow);
}

TEST(RunConfig, ValidationMessages) {
  cronos::RunConfig cfg;
  cfg.data.kind = "csv";
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.data.holdout = 1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.task = cronos::Task::CronosGeneral;
  cfg.loss = "hinge";
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Pipeline, ZeroLabelsGiveZeroObjective) {
  auto ds = cronos::gen_synthetic(cronos::SyntheticKind::Blobs, 60, 4, 1.0, 1);
  std::fill(ds.y_train.begin(), ds.y_train.end(), 0.0);
  cronos::RunConfig cfg;
  cfg.solver.admm_iters = 10;
  const auto out = cronos::run_pipeline(cfg, ds, nullptr);
  EXPECT_LE(out.summary.final_obj, 1e-10);
  EXPECT_EQ(out.summary.iterations, 10u);
}

TEST(Pipeline, BlobsReachHighValidationAccuracy) {
  cronos::RunConfig cfg;
  cfg.data.n = 300;
  cfg.solver.admm_iters = 10;
  cfg.seed = 2;
  std::ostringstream metrics;
  const auto out = cronos::run_pipeline(cfg, cronos::load_dataset(cfg), &metrics);
  ASSERT_TRUE(out.summary.peak_val_acc.has_value());
  EXPECT_GE(*out.summary.peak_val_acc, 0.95);

  std::istringstream lines(metrics.str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::ordered_json::parse(line);
    std::vector<std::string> keys;
    for (const auto& it : j.items()) keys.push_back(it.key());
    EXPECT_EQ(keys, (std::vector<std::string>{"iter", "obj", "resid_uv", "resid_gus",
                                              "pcg_iters", "wall_ms", "train_acc", "val_acc"}));
    EXPECT_EQ(j.at("iter"), ++count);
    EXPECT_EQ(j.at("wall_ms"), 0.0);
  }
  EXPECT_EQ(count, 10u);
}

TEST(Pipeline, GeneralAndAmTasksRun) {
  cronos::RunConfig cfg;
  cfg.data.n = 100;
  cfg.data.d = 4;
  cfg.task = cronos::Task::CronosGeneral;
  cfg.solver.admm_iters = 5;
  auto out = cronos::run_pipeline(cfg, cronos::load_dataset(cfg), nullptr);
  EXPECT_EQ(out.model.task, "cronos-general");
  EXPECT_GE(out.summary.final_train_acc, 0.8);

  cfg.task = cronos::Task::CronosAm;
  cfg.am.outer_iters = 2;
  cfg.hidden = {6};
  out = cronos::run_pipeline(cfg, cronos::load_dataset(cfg), nullptr);
  EXPECT_EQ(out.model.params.layers.size(), 1u);
  EXPECT_EQ(out.summary.iterations, 2u);
}

TEST(Run, InvalidConfigCreatesNothing) {
  const auto dir = scratch("invalid");
  auto cfg = small_config(dir);
  cfg.solver.rho = -1.0;
  std::ostringstream err;
  EXPECT_EQ(cronos::run(cfg, err), cronos::kExitInvalidConfig);
  EXPECT_FALSE(fs::exists(dir));
  const auto j = nlohmann::json::parse(err.str());
  EXPECT_EQ(j.at("error"), "invalid_config");
}

TEST(Run, MissingDataFileIsAFailure) {
  const auto dir = scratch("missing");
  auto cfg = small_config(dir);
  cfg.data.kind = "csv";
  cfg.data.train_path = (dir / "nothing.csv").string();
  std::ostringstream err;
  EXPECT_EQ(cronos::run(cfg, err), cronos::kExitFailure);
  EXPECT_EQ(nlohmann::json::parse(err.str()).at("error"), "data_error");
}

TEST(Run, RerunsAreByteIdentical) {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  for (auto task : {cronos::Task::Cronos, cronos::Task::CronosAm}) {
    auto ca = small_config(a);
    auto cb = small_config(b);
    ca.task = cb.task = task;
    ca.am.outer_iters = cb.am.outer_iters = 2;
    std::ostringstream err;
    ASSERT_EQ(cronos::run(ca, err), 0) << err.str();
    ASSERT_EQ(cronos::run(cb, err), 0) << err.str();
    EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
    EXPECT_EQ(slurp(a / "summary.json"), slurp(b / "summary.json"));
    EXPECT_EQ(slurp(a / "model.json"), slurp(b / "model.json"));
  }
  auto other = small_config(b);
  other.seed = 1;
  std::ostringstream err;
  ASSERT_EQ(cronos::run(other, err), 0);
  EXPECT_NE(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Run, SummarySchema) {
  const auto dir = scratch("summary");
  std::ostringstream err;
  ASSERT_EQ(cronos::run(small_config(dir), err), 0);
  const auto j = nlohmann::ordered_json::parse(slurp(dir / "summary.json"));
  std::vector<std::string> keys;
  for (const auto& it : j.items()) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"schema_version", "metrics_schema_version", "task",
                                            "peak_val_acc", "final_train_acc", "final_obj",
                                            "total_wall_ms", "iterations"}));
  EXPECT_EQ(j.at("schema_version"), cronos::kSummarySchemaVersion);
  EXPECT_EQ(j.at("iterations"), 8);
  fs::remove_all(dir);
}

TEST(Checkpoint, RoundTripPreservesPredictionsExactly) {
  const auto dir = scratch("ckpt");
  fs::create_directories(dir);
  for (auto task : {cronos::Task::Cronos, cronos::Task::CronosAm}) {
    cronos::RunConfig cfg;
    cfg.task = task;
    cfg.data.n = 80;
    cfg.data.d = 4;
    cfg.solver.admm_iters = 4;
    cfg.am.outer_iters = 2;
    cfg.hidden = {5, 5};
    const auto ds = cronos::gen_synthetic(cronos::SyntheticKind::PlantedRelu, 80, 4, 0.5, 3);
    auto trained = ds;
    cronos::standardize(trained);
    const auto out = cronos::run_pipeline(cfg, trained, nullptr);
    const auto path = (dir / "model.json").string();
    cronos::save_model(path, out.model);
    const auto back = cronos::load_model(path);
    EXPECT_EQ(cronos::model_predict(back, ds.x_test), cronos::model_predict(out.model, ds.x_test));
    EXPECT_EQ(back.params, out.model.params);
    EXPECT_EQ(back.state.u, out.model.state.u);
  }
  std::ofstream(dir / "bad.json") << R"({"format": "cronos-model", "version": 99})";
  EXPECT_ANY_THROW(cronos::load_model((dir / "bad.json").string()));
  fs::remove_all(dir);
}

#ifdef CRONOS_CLI_PATH
namespace {

int cli(const std::string& args) {
  const std::string cmd = std::string(CRONOS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodesAndOutputs) {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto out = dir / "o";
  EXPECT_EQ(cli("train --out " + out.string() + " --admm_iters 3 --n 60"), 0);
  EXPECT_TRUE(fs::exists(out / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(out / "summary.json"));
  EXPECT_TRUE(fs::exists(out / "model.json"));

  EXPECT_EQ(cli("train --out " + (dir / "bad").string() + " --rho -1"), 2);
  EXPECT_FALSE(fs::exists(dir / "bad"));
  EXPECT_EQ(cli("train --config " + (dir / "nope.json").string()), 2);
  std::ofstream(dir / "unknown.json") << R"({"solver": {"rhoo": 1}})";
  EXPECT_EQ(cli("train --config " + (dir / "unknown.json").string()), 2);

  const auto data = dir / "data";
  EXPECT_EQ(cli("gen-data --kind blobs --n 40 --d 10 --seed 1 --out " + data.string()), 0);
  EXPECT_TRUE(fs::exists(data / "train.crns"));
  EXPECT_EQ(cli("eval --model " + (out / "model.json").string() + " --data " +
                (data / "test.crns").string()),
            0);
  EXPECT_NE(cli("eval --model " + (dir / "missing.json").string() + " --data " +
                (data / "test.crns").string()),
            0);
  fs::remove_all(dir);
}
#endif
