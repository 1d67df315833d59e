// cronos: train / eval / gen-data front end for the solver library.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cronos/checkpoint.hpp"
#include "cronos/data.hpp"
#include "cronos/run.hpp"

namespace {

struct TrainArgs {
  std::string config_path;
  std::string seed;
  std::string out_dir;
  std::string task;
  std::map<std::string, std::string> fields;
};

struct EvalArgs {
  std::string model_path;
  std::string data_path;
  std::string format = "rawf32";
  int label_column = -1;
};

struct GenArgs {
  std::string kind = "blobs";
  std::size_t n = 400;
  std::size_t d = 10;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string out_dir = "data";
};

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

int do_train(const TrainArgs& args, const CLI::App& sub) {
  cronos::RunConfig cfg;
  try {
    if (!args.config_path.empty()) cfg = cronos::load_run_config(args.config_path);
    cronos::apply_env_overrides(cfg);
    for (const auto& [key, value] : args.fields)
      if (sub.count("--" + key) > 0) cronos::apply_override(cfg, key, value);
    if (sub.count("--seed") > 0) cronos::apply_override(cfg, "seed", args.seed);
    if (sub.count("--out") > 0) cronos::apply_override(cfg, "out_dir", args.out_dir);
    if (sub.count("--task") > 0) cronos::apply_override(cfg, "task", args.task);
  } catch (const std::exception& e) {
    print_error("invalid_config", e.what());
    return cronos::kExitInvalidConfig;
  }
  const int status = cronos::run(cfg, std::cerr);
  if (status == cronos::kExitOk) std::cout << (std::filesystem::path(cfg.out_dir) / "summary.json").string() << '\n';
  return status;
}

int do_eval(const EvalArgs& args) {
  try {
    const cronos::Model model = cronos::load_model(args.model_path);
    const cronos::Dataset ds = args.format == "csv"
                                   ? cronos::load_csv(args.data_path, args.label_column)
                                   : cronos::load_rawf32(args.data_path);
    const auto pred = cronos::model_predict(model, ds.x_train);
    nlohmann::ordered_json out;
    out["rows"] = ds.x_train.rows();
    out["accuracy"] = cronos::sign_accuracy(pred, ds.y_train);
    std::cout << out.dump() << '\n';
  } catch (const std::exception& e) {
    print_error("eval_failed", e.what());
    return cronos::kExitFailure;
  }
  return cronos::kExitOk;
}

int do_gen(const GenArgs& args) {
  try {
    const auto ds = cronos::gen_synthetic(cronos::parse_synthetic_kind(args.kind), args.n, args.d,
                                          args.noise, args.seed);
    const std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    cronos::write_rawf32((dir / "train.crns").string(), ds.x_train, ds.y_train);
    cronos::write_rawf32((dir / "test.crns").string(), ds.x_test, ds.y_test);
    std::cout << (dir / "train.crns").string() << '\n' << (dir / "test.crns").string() << '\n';
  } catch (const std::exception& e) {
    print_error("gen_failed", e.what());
    return cronos::kExitFailure;
  }
  return cronos::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex two-layer and alternating-minimization ReLU network training"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes metrics.jsonl, summary.json, model.json");
  train_cmd->add_option("--config", train.config_path, "JSON run configuration");
  train_cmd->add_option("--seed", train.seed, "Master seed (solver, gates, data)");
  train_cmd->add_option("--out", train.out_dir, "Output directory");
  train_cmd->add_option("--task", train.task, "cronos | cronos-general | cronos-am");
  train_cmd->footer("Other config fields are set with --<field> VALUE or CRONOS_<FIELD> env vars.\n"
                    "Precedence: defaults < --config file < environment < flags.");
  for (const auto& key : cronos::override_keys()) {
    if (key == "seed" || key == "task" || key == "out_dir") continue;
    train_cmd->add_option("--" + key, train.fields[key])->group("Config fields");
  }

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a saved model on a labelled file");
  eval_cmd->add_option("--model", eval.model_path, "model.json from train")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data_path, "Data file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--format", eval.format, "rawf32 | csv")->check(CLI::IsMember({"rawf32", "csv"}));
  eval_cmd->add_option("--label-column", eval.label_column, "CSV label column, negative counts from the end");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write synthetic train.crns / test.crns");
  gen_cmd->add_option("--kind", gen.kind, "blobs | planted-relu")->check(CLI::IsMember({"blobs", "planted-relu"}));
  gen_cmd->add_option("--n", gen.n, "Training rows")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--d", gen.d, "Features")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--noise", gen.noise, "Noise level")->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.seed, "Seed");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  if (*train_cmd) return do_train(train, *train_cmd);
  if (*eval_cmd) return do_eval(eval);
  return do_gen(gen);
}
