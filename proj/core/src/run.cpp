#include "cronos/run.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cronos {

namespace {

using Clock = std::chrono::steady_clock;

const char* const kNested[] = {"data", "solver", "am"};

void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known,
                         const std::string& where) {
  if (!given.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& item : given.items())
    if (!known.contains(item.key()))
      throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
}

SmoothLoss make_loss(const std::string& name) {
  if (name == "logistic") return logistic_loss();
  if (name == "least_squares") return least_squares_loss();
  throw std::invalid_argument("unknown loss '" + name + "' (logistic | least_squares)");
}

std::optional<double> accuracy_or_none(const Matrix& x, std::span<const double> y,
                                       const std::function<std::vector<double>(const Matrix&)>& f) {
  if (x.rows() == 0) return std::nullopt;
  return sign_accuracy(f(x), y);
}

void write_metrics_line(std::ostream& out, std::size_t iter, double obj, double resid_uv,
                        double resid_gus, std::size_t pcg_iters, double wall_ms,
                        double train_acc, std::optional<double> val_acc) {
  nlohmann::ordered_json line;
  line["iter"] = iter;
  line["obj"] = obj;
  line["resid_uv"] = resid_uv;
  line["resid_gus"] = resid_gus;
  line["pcg_iters"] = pcg_iters;
  line["wall_ms"] = wall_ms;
  line["train_acc"] = train_acc;
  line["val_acc"] = val_acc ? nlohmann::ordered_json(*val_acc) : nlohmann::ordered_json(nullptr);
  out << line.dump() << '\n';
  out.flush();
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

void to_json(nlohmann::json& j, const DataSource& d) {
  j = nlohmann::json{{"kind", d.kind},
                     {"synthetic", d.synthetic},
                     {"n", d.n},
                     {"d", d.d},
                     {"noise", d.noise},
                     {"train_path", d.train_path},
                     {"test_path", d.test_path},
                     {"label_column", d.label_column},
                     {"holdout", d.holdout},
                     {"standardize", d.standardize}};
}

void from_json(const nlohmann::json& j, DataSource& d) {
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("kind", d.kind);
  read("synthetic", d.synthetic);
  read("n", d.n);
  read("d", d.d);
  read("noise", d.noise);
  read("train_path", d.train_path);
  read("test_path", d.test_path);
  read("label_column", d.label_column);
  read("holdout", d.holdout);
  read("standardize", d.standardize);
}

Task parse_task(const std::string& name) {
  if (name == "cronos") return Task::Cronos;
  if (name == "cronos-general") return Task::CronosGeneral;
  if (name == "cronos-am") return Task::CronosAm;
  throw std::invalid_argument("unknown task '" + name + "' (cronos | cronos-general | cronos-am)");
}

std::string to_string(Task task) {
  switch (task) {
    case Task::Cronos: return "cronos";
    case Task::CronosGeneral: return "cronos-general";
    case Task::CronosAm: return "cronos-am";
  }
  return "cronos";
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  solver.validate();
  am.validate();
  if (data.kind == "synthetic") {
    parse_synthetic_kind(data.synthetic);
    if (data.n < 1 || data.d < 1) fail("data.n and data.d must be >= 1");
    if (!(data.noise >= 0.0)) fail("data.noise must be >= 0");
  } else if (data.kind == "csv" || data.kind == "rawf32") {
    if (data.train_path.empty()) fail("data.train_path is required for kind " + data.kind);
  } else {
    fail("unknown data.kind '" + data.kind + "' (synthetic | csv | rawf32)");
  }
  if (!(data.holdout >= 0.0 && data.holdout < 1.0)) fail("data.holdout must be in [0, 1)");
  if (task == Task::CronosGeneral) {
    make_loss(loss);
    if (refresh_every < 1) fail("refresh_every must be >= 1");
  }
  for (std::size_t w : hidden)
    if (w < 1) fail("hidden widths must be >= 1");
  if (out_dir.empty()) fail("out_dir must not be empty");
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"task", to_string(c.task)},
                     {"seed", c.seed},
                     {"out_dir", c.out_dir},
                     {"timing", c.timing},
                     {"hidden", c.hidden},
                     {"loss", c.loss},
                     {"refresh_every", c.refresh_every},
                     {"data", c.data},
                     {"solver", c.solver},
                     {"am", c.am}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  const nlohmann::json known = RunConfig{};
  reject_unknown_keys(j, known, "config");
  for (const char* section : kNested)
    if (j.contains(section)) reject_unknown_keys(j.at(section), known.at(section), section);
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  auto read = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  read("seed", c.seed);
  read("out_dir", c.out_dir);
  read("timing", c.timing);
  read("hidden", c.hidden);
  read("loss", c.loss);
  read("refresh_every", c.refresh_every);
  if (j.contains("data")) from_json(j.at("data"), c.data);
  if (j.contains("solver")) j.at("solver").get_to(c.solver);
  if (j.contains("am")) j.at("am").get_to(c.am);
}

std::vector<std::string> override_keys() {
  const nlohmann::json j = RunConfig{};
  std::set<std::string> keys;
  for (const auto& item : j.items()) {
    if (item.value().is_object()) {
      for (const auto& inner : item.value().items()) keys.insert(inner.key());
    } else {
      keys.insert(item.key());
    }
  }
  return {keys.begin(), keys.end()};
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
  nlohmann::json j = cfg;
  nlohmann::json* slot = nullptr;
  if (j.contains(key) && !j.at(key).is_object()) {
    slot = &j[key];
  } else {
    for (const char* section : kNested)
      if (j.at(section).contains(key)) {
        slot = &j[section][key];
        break;
      }
  }
  if (!slot) throw std::invalid_argument("unknown config key '" + key + "'");

  if (slot->is_string()) {
    *slot = value;
  } else {
    std::string text = value;
    if (slot->is_array() && (text.empty() || text.front() != '[')) text = "[" + text + "]";
    try {
      *slot = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
      throw std::invalid_argument("config key '" + key + "': cannot parse value '" + value + "'");
    }
  }
  try {
    RunConfig updated;
    from_json(j, updated);
    cfg = std::move(updated);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config key '" + key + "': " + e.what());
  }
}

void apply_env_overrides(RunConfig& cfg) {
  for (const auto& key : override_keys()) {
    std::string name = "CRONOS_" + key;
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
    if (const char* v = std::getenv(name.c_str())) apply_override(cfg, key, v);
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open config file");
  try {
    nlohmann::json j;
    in >> j;
    return j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

Dataset load_dataset(const RunConfig& cfg) {
  const auto& src = cfg.data;
  Dataset ds;
  if (src.kind == "synthetic") {
    ds = gen_synthetic(parse_synthetic_kind(src.synthetic), src.n, src.d, src.noise, cfg.seed);
  } else {
    auto load = [&](const std::string& path) {
      return src.kind == "csv" ? load_csv(path, src.label_column) : load_rawf32(path);
    };
    ds = load(src.train_path);
    if (!src.test_path.empty()) {
      Dataset test = load(src.test_path);
      ds.x_test = std::move(test.x_train);
      ds.y_test = std::move(test.y_train);
    } else {
      split_holdout(ds, src.holdout, cfg.seed);
    }
  }
  ds.validate();
  if (src.standardize) standardize(ds);
  return ds;
}

void write_summary(std::ostream& out, const RunSummary& s) {
  nlohmann::ordered_json o;
  o["schema_version"] = kSummarySchemaVersion;
  o["metrics_schema_version"] = kMetricsSchemaVersion;
  o["task"] = to_string(s.task);
  o["peak_val_acc"] = s.peak_val_acc ? nlohmann::ordered_json(*s.peak_val_acc)
                                     : nlohmann::ordered_json(nullptr);
  o["final_train_acc"] = s.final_train_acc;
  o["final_obj"] = s.final_obj;
  o["total_wall_ms"] = s.total_wall_ms;
  o["iterations"] = s.iterations;
  out << o.dump(2) << '\n';
}

RunOutcome run_pipeline(const RunConfig& cfg, const Dataset& data, std::ostream* metrics) {
  cfg.validate();
  data.validate();
  const auto start = Clock::now();

  SolverConfig solver = cfg.solver;
  solver.seed = cfg.seed;
  AmConfig am = cfg.am;
  am.seed = cfg.seed;

  RunOutcome out;
  out.summary.task = cfg.task;
  out.model.task = to_string(cfg.task);
  out.model.standardization = data.standardization;
  auto& sum = out.summary;

  auto note_val = [&](std::optional<double> val) {
    if (val && (!sum.peak_val_acc || *val > *sum.peak_val_acc)) sum.peak_val_acc = val;
  };
  auto wall = [&](double ms) { return cfg.timing ? ms : 0.0; };

  if (cfg.task == Task::CronosAm) {
    std::vector<std::size_t> widths{data.x_train.cols()};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    const OuterObserver observer = [&](const OuterRecord& r) {
      const std::optional<double> val =
          std::isnan(r.val_acc) ? std::nullopt : std::optional<double>(r.val_acc);
      note_val(val);
      sum.final_train_acc = r.train_acc;
      sum.final_obj = r.obj;
      sum.iterations = r.outer;
      if (metrics)
        write_metrics_line(*metrics, r.outer, r.obj, r.resid_uv, r.resid_gus, r.pcg_iters,
                           wall(r.wall_ms), r.train_acc, val);
    };
    auto res = cronos_am_solve(data.x_train, data.y_train, widths, solver, am,
                               data.has_test() ? &data.x_test : nullptr, data.y_test, observer);
    out.model.params = std::move(res.params);
    out.model.gates = std::move(res.gates);
    out.model.state = std::move(res.state);
  } else {
    Rng rng(cfg.seed);
    const GateSet gs = sample_gates(data.x_train, solver.patterns, rng, solver.gate_sampling);
    const IterationObserver observer = [&](const IterRecord& r, const ConvexState& st) {
      auto f = [&](const Matrix& x) { return predict(gs, x, st.u); };
      const double train = sign_accuracy(f(data.x_train), data.y_train);
      const auto val = accuracy_or_none(data.x_test, data.y_test, f);
      note_val(val);
      sum.final_train_acc = train;
      sum.final_obj = r.obj;
      sum.iterations = r.iter;
      if (metrics)
        write_metrics_line(*metrics, r.iter, r.obj, r.resid_uv, r.resid_gus, r.pcg_iters,
                           wall(r.wall_ms), train, val);
    };
    SolveOptions options{nullptr, observer};
    SolveResult res;
    if (cfg.task == Task::Cronos) {
      res = cronos_solve(data.x_train, data.y_train, gs, solver, options);
    } else {
      res = cronos_general_solve(data.x_train, data.y_train, gs, solver, make_loss(cfg.loss),
                                 cfg.refresh_every, options);
    }
    out.model.gates = gs;
    out.model.state = std::move(res.state);
  }
  sum.total_wall_ms =
      wall(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  return out;
}

int run(const RunConfig& cfg, std::ostream& err) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    write_error(err, "invalid_config", e.what());
    return kExitInvalidConfig;
  }

  Dataset data;
  try {
    data = load_dataset(cfg);
  } catch (const std::exception& e) {
    write_error(err, "data_error", e.what());
    return kExitFailure;
  }

  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  try {
    fs::create_directories(dir);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw std::runtime_error((dir / "metrics.jsonl").string() + ": cannot open");
    const RunOutcome outcome = run_pipeline(cfg, data, &metrics);

    std::ofstream summary(dir / "summary.json", std::ios::trunc);
    write_summary(summary, outcome.summary);
    if (!summary) throw std::runtime_error((dir / "summary.json").string() + ": write failed");
    save_model((dir / "model.json").string(), outcome.model);
  } catch (const std::exception& e) {
    write_error(err, "run_failed", e.what());
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace cronos
