#include "pitrecal/config.hpp"

#include <fstream>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"
#include "pitrecal/core/rng.hpp"

namespace pitrecal {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::Knn: return "knn";
    case Method::Flow: return "flow";
  }
  return "none";
}

std::string to_string(DataSource s) {
  switch (s) {
    case DataSource::Scenario: return "scenario";
    case DataSource::Twisted: return "twisted";
    case DataSource::Csv: return "csv";
  }
  return "scenario";
}

namespace {

Method parse_method(const std::string& s) {
  if (s == "none") return Method::None;
  if (s == "knn") return Method::Knn;
  if (s == "flow") return Method::Flow;
  throw ConfigError("unknown method '" + s + "' (expected none, knn or flow)");
}

DataSource parse_source(const std::string& s) {
  if (s == "scenario") return DataSource::Scenario;
  if (s == "twisted") return DataSource::Twisted;
  if (s == "csv") return DataSource::Csv;
  throw ConfigError("unknown data source '" + s + "' (expected scenario, twisted or csv)");
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return std::filesystem::absolute(path).lexically_normal();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  RunConfig c;
  reject_unknown(j, {"data", "model", "method", "knn", "flow", "diagnostics", "seed", "output_dir"}, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("output_dir")) {
    std::string out;
    read(j, "output_dir", out, "config");
    c.output_dir = out;
  }
  if (j.contains("method")) {
    std::string m;
    read(j, "method", m, "config");
    c.method = parse_method(m);
  }

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"source", "scenario", "n_val", "n_test", "n_train", "validation", "test"}, "data");
    std::string source = "scenario";
    read(d, "source", source, "data");
    c.source = parse_source(source);
    read(d, "scenario", c.scenario, "data");
    if (c.source == DataSource::Twisted) {
      c.n_val = c.twisted.n_val;
      c.n_test = c.twisted.n_test;
      read(d, "n_train", c.twisted.n_train, "data");
    }
    read(d, "n_val", c.n_val, "data");
    read(d, "n_test", c.n_test, "data");
    if (c.source == DataSource::Twisted) {
      c.twisted.n_val = c.n_val;
      c.twisted.n_test = c.n_test;
    }
    std::string path;
    if (d.contains("validation")) {
      read(d, "validation", path, "data");
      c.validation_path = resolve(base_dir, path);
    }
    if (d.contains("test")) {
      read(d, "test", path, "data");
      c.test_path = resolve(base_dir, path);
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    if (!m.is_object() || !m.contains("type")) throw ConfigError("model needs a 'type'");
    read(m, "type", c.model.type, "model");
    c.model.params = m;
    c.model.params.erase("type");
    if (c.model.params.contains("path")) {
      c.model.params["path"] = resolve(base_dir, c.model.params["path"].get<std::string>()).string();
    }
  }

  if (j.contains("knn")) {
    const json& k = j.at("knn");
    reject_unknown(k, {"k", "k_fraction", "standardize", "feature_columns"}, "knn");
    if (k.contains("k")) {
      std::size_t kk = 0;
      read(k, "k", kk, "knn");
      c.knn.k = kk;
    }
    read(k, "k_fraction", c.knn.k_fraction, "knn");
    read(k, "standardize", c.knn.standardize, "knn");
    read(k, "feature_columns", c.knn.feature_columns, "knn");
  }

  if (j.contains("flow")) {
    const json& f = j.at("flow");
    reject_unknown(f, {"layers", "hidden", "hidden_layers", "scale_bound", "learning_rate", "batch_size",
                       "max_epochs", "holdout_fraction", "patience", "average_decay", "conditioning_columns", "samples"},
                   "flow");
    read(f, "layers", c.flow.architecture.layers, "flow");
    read(f, "hidden", c.flow.architecture.hidden, "flow");
    read(f, "hidden_layers", c.flow.architecture.hidden_layers, "flow");
    read(f, "scale_bound", c.flow.architecture.scale_bound, "flow");
    read(f, "learning_rate", c.flow.training.learning_rate, "flow");
    read(f, "batch_size", c.flow.training.batch_size, "flow");
    read(f, "max_epochs", c.flow.training.max_epochs, "flow");
    read(f, "holdout_fraction", c.flow.training.holdout_fraction, "flow");
    read(f, "patience", c.flow.training.patience, "flow");
    read(f, "average_decay", c.flow.training.average_decay, "flow");
    read(f, "conditioning_columns", c.flow.conditioning_columns, "flow");
    read(f, "samples", c.flow.samples, "flow");
  }

  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    reject_unknown(d, {"m", "grid_points", "bins"}, "diagnostics");
    read(d, "m", c.diagnostics.m, "diagnostics");
    read(d, "grid_points", c.diagnostics.grid_points, "diagnostics");
    read(d, "bins", c.diagnostics.bins, "diagnostics");
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json RunConfig::to_json() const {
  json data = {{"source", pitrecal::to_string(source)}};
  if (source == DataSource::Scenario) {
    data["scenario"] = scenario;
  }
  if (source == DataSource::Twisted) {
    data["n_train"] = twisted.n_train;
    data["n_val"] = twisted.n_val;
    data["n_test"] = twisted.n_test;
  } else if (source == DataSource::Scenario) {
    data["n_val"] = n_val;
    data["n_test"] = n_test;
  } else {
    data["validation"] = validation_path.string();
    data["test"] = test_path.string();
  }
  json knn_j = {{"k_fraction", knn.k_fraction},
                {"standardize", knn.standardize},
                {"feature_columns", knn.feature_columns}};
  if (knn.k) knn_j["k"] = *knn.k;
  json out = {
      {"data", data},
      {"method", pitrecal::to_string(method)},
      {"knn", knn_j},
      {"flow",
       {{"layers", flow.architecture.layers},
        {"hidden", flow.architecture.hidden},
        {"hidden_layers", flow.architecture.hidden_layers},
        {"scale_bound", flow.architecture.scale_bound},
        {"learning_rate", flow.training.learning_rate},
        {"batch_size", flow.training.batch_size},
        {"max_epochs", flow.training.max_epochs},
        {"holdout_fraction", flow.training.holdout_fraction},
        {"patience", flow.training.patience},
        {"average_decay", flow.training.average_decay},
        {"conditioning_columns", flow.conditioning_columns},
        {"samples", flow.samples}}},
      {"diagnostics",
       {{"m", diagnostics.m}, {"grid_points", diagnostics.grid_points}, {"bins", diagnostics.bins}}},
      {"seed", seed},
      {"output_dir", output_dir.string()},
  };
  if (!model.type.empty()) {
    json m = model.params;
    m["type"] = model.type;
    out["model"] = m;
  }
  return out;
}

void RunConfig::validate() const {
  if (source == DataSource::Scenario) CopulaScenario::parse(scenario);
  const std::size_t nv = source == DataSource::Twisted ? twisted.n_val : n_val;
  const std::size_t nt = source == DataSource::Twisted ? twisted.n_test : n_test;
  if (source != DataSource::Csv && (nv == 0 || nt < 2)) {
    throw ConfigError("data: n_val must be positive and n_test at least 2");
  }
  if (source == DataSource::Twisted && twisted.n_train < 3) throw ConfigError("data: n_train must be at least 3");
  if (source == DataSource::Csv) {
    if (validation_path.empty() || test_path.empty()) {
      throw ConfigError("data: csv source needs 'validation' and 'test' paths");
    }
    for (const auto& p : {validation_path, test_path}) {
      if (!std::filesystem::exists(p)) throw ConfigError("data file not found: " + p.string());
    }
    if (model.type.empty()) throw ConfigError("csv data needs a model section");
  }
  if (!model.type.empty() && model.type != "gumbel_scenario" && model.type != "independent_gaussian_linear" &&
      model.type != "samples") {
    throw ConfigError("unknown model type '" + model.type + "'");
  }
  if (model.type == "samples") {
    if (!model.params.contains("path")) throw ConfigError("samples model needs a 'path'");
    if (!std::filesystem::exists(model.params["path"].get<std::string>())) {
      throw ConfigError("model sample file not found: " + model.params["path"].get<std::string>());
    }
  }
  if (knn.k && *knn.k == 0) throw ConfigError("knn.k must be at least 1");
  if (!(knn.k_fraction > 0.0 && knn.k_fraction <= 1.0)) throw ConfigError("knn.k_fraction must lie in (0, 1]");
  if (source != DataSource::Csv && knn.k && *knn.k > nv) {
    throw ConfigError("knn.k (" + std::to_string(*knn.k) + ") exceeds n_val (" + std::to_string(nv) + ")");
  }
  if (flow.architecture.layers == 0 || flow.architecture.hidden == 0) {
    throw ConfigError("flow: layers and hidden width must be positive");
  }
  if (!(flow.architecture.scale_bound > 0.0)) throw ConfigError("flow.scale_bound must be positive");
  if (!(flow.training.learning_rate > 0.0)) throw ConfigError("flow.learning_rate must be positive");
  if (flow.training.batch_size == 0 || flow.training.max_epochs == 0) {
    throw ConfigError("flow: batch_size and max_epochs must be positive");
  }
  if (!(flow.training.holdout_fraction >= 0.0 && flow.training.holdout_fraction < 1.0)) {
    throw ConfigError("flow.holdout_fraction must lie in [0, 1)");
  }
  if (!(flow.training.average_decay >= 0.0 && flow.training.average_decay < 1.0)) {
    throw ConfigError("flow.average_decay must lie in [0, 1)");
  }
  if (flow.samples < 2) throw ConfigError("flow.samples must be at least 2");
  if (diagnostics.m < 2) throw ConfigError("diagnostics.m must be at least 2");
  if (diagnostics.grid_points < 2) throw ConfigError("diagnostics.grid_points must be at least 2");
  if (diagnostics.bins == 0) throw ConfigError("diagnostics.bins must be positive");
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  return Rng::derive(seed, stage).next_u64();
}

}  // namespace pitrecal
