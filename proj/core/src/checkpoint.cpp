#include "cronos/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cronos {

std::vector<double> model_predict(const Model& model, const Matrix& x) {
  Matrix xs = x;
  model.standardization.apply(xs);
  return am_predict(model.params, model.gates, model.state.u, xs);
}

void save_model(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << nlohmann::json(model).dump() << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open model file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return j.get<Model>();
}

void to_json(nlohmann::json& j, const Model& m) {
  j = nlohmann::json{{"format", "cronos-model"},
                     {"version", kModelVersion},
                     {"task", m.task},
                     {"inner_layers", m.params},
                     {"gates", m.gates},
                     {"state", m.state},
                     {"standardization", m.standardization}};
}

void from_json(const nlohmann::json& j, Model& m) {
  if (j.value("format", std::string{}) != "cronos-model")
    throw std::runtime_error("model: not a cronos model file");
  const int version = j.at("version").get<int>();
  if (version != kModelVersion)
    throw std::runtime_error("model: unsupported version " + std::to_string(version));
  j.at("task").get_to(m.task);
  j.at("inner_layers").get_to(m.params);
  j.at("gates").get_to(m.gates);
  j.at("state").get_to(m.state);
  j.at("standardization").get_to(m.standardization);
  if (!m.state.matches(m.gates)) throw std::runtime_error("model: state does not match gates");
}

}  // namespace cronos
