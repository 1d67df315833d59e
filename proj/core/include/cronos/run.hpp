#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cronos/am.hpp"
#include "cronos/checkpoint.hpp"
#include "cronos/data.hpp"
#include "cronos/solver.hpp"

namespace cronos {

inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kSummarySchemaVersion = 1;

enum class Task { Cronos, CronosGeneral, CronosAm };

Task parse_task(const std::string& name);
std::string to_string(Task task);

struct DataSource {
  std::string kind = "synthetic";  ///< synthetic | csv | rawf32
  std::string synthetic = "blobs";  ///< blobs | planted-relu
  std::size_t n = 400;
  std::size_t d = 10;
  double noise = 1.0;
  std::string train_path;
  std::string test_path;            ///< optional; otherwise `holdout` is split off
  int label_column = -1;
  double holdout = 0.2;
  bool standardize = true;
};

void to_json(nlohmann::json& j, const DataSource& d);
void from_json(const nlohmann::json& j, DataSource& d);

/// Config file schema (JSON): top-level keys task, seed, out_dir, timing,
/// hidden, loss, refresh_every, plus objects "data", "solver", "am" whose
/// keys match the DataSource, SolverConfig and AmConfig field names.
struct RunConfig {
  Task task = Task::Cronos;
  DataSource data;
  SolverConfig solver;
  AmConfig am;
  std::vector<std::size_t> hidden{16, 16};  ///< inner widths for cronos-am
  std::string loss = "logistic";            ///< cronos-general: logistic | least_squares
  std::size_t refresh_every = 1;            ///< cronos-general preconditioner refresh
  std::string out_dir = "out";
  std::uint64_t seed = 0;                   ///< overrides solver, am and data seeds
  bool timing = false;                      ///< record wall_ms in metrics.jsonl

  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Sets one field by name. Keys are either top-level ("seed") or the bare
/// field name of a nested object ("rho", "outer_iters", "train_path"). The
/// value is parsed as JSON, falling back to a plain string.
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key accepted by apply_override.
std::vector<std::string> override_keys();

/// Applies CRONOS_<KEY> environment variables (key upper-cased).
void apply_env_overrides(RunConfig& cfg);

RunConfig load_run_config(const std::string& path);

/// Materializes the configured dataset (split, standardized).
Dataset load_dataset(const RunConfig& cfg);

struct RunSummary {
  Task task = Task::Cronos;
  std::optional<double> peak_val_acc;
  double final_train_acc = 0.0;
  double final_obj = 0.0;
  double total_wall_ms = 0.0;
  std::size_t iterations = 0;
};

/// Summary JSON: schema_version, metrics_schema_version, task, peak_val_acc
/// (null without test data), final_train_acc, final_obj, total_wall_ms,
/// iterations.
void write_summary(std::ostream& out, const RunSummary& s);

struct RunOutcome {
  RunSummary summary;
  Model model;
};

/// Trains on an in-memory dataset, streaming one metrics line per record to
/// `metrics` (flushed per line) when given.
RunOutcome run_pipeline(const RunConfig& cfg, const Dataset& data, std::ostream* metrics);

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInvalidConfig = 2;

/// Validates, loads data, trains, and writes out_dir/{metrics.jsonl,
/// summary.json, model.json}. Errors go to `err` as one JSON object. No
/// file is created when validation fails.
int run(const RunConfig& cfg, std::ostream& err);

}  // namespace cronos
