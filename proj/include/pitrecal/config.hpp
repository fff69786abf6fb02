#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pitrecal/flow/coupling.hpp"
#include "pitrecal/flow/train.hpp"
#include "pitrecal/simlab.hpp"

namespace pitrecal {

enum class Method { None, Knn, Flow };
enum class DataSource { Scenario, Twisted, Csv };

std::string to_string(Method m);
std::string to_string(DataSource s);

struct KnnSettings {
  std::optional<std::size_t> k;  // absolute count; wins over k_fraction
  double k_fraction = 0.05;
  bool standardize = true;
  std::vector<std::size_t> feature_columns;  // empty = all
};

struct FlowSettings {
  flow::FlowArchitecture architecture;
  flow::TrainConfig training;
  std::vector<std::size_t> conditioning_columns;  // empty = all
  std::size_t samples = 2000;  // recalibrated draws per test point
};

struct DiagnosticSettings {
  std::size_t m = 2000;  // joint draws per point for Kendall estimates
  std::size_t grid_points = 21;
  std::size_t bins = 20;
};

// Base model for CSV data: "gumbel_scenario", "independent_gaussian_linear"
// or "samples".
struct ModelSpec {
  std::string type;
  nlohmann::json params = nlohmann::json::object();
};

// Declarative run description, read from JSON. Relative paths are resolved
// against the directory of the config file.
struct RunConfig {
  DataSource source = DataSource::Scenario;
  std::string scenario = "TTT";
  std::size_t n_val = 4000;  // copula scenarios
  std::size_t n_test = 4000;
  TwistedScenario twisted;  // carries its own sizes
  std::filesystem::path validation_path;
  std::filesystem::path test_path;
  ModelSpec model;
  Method method = Method::None;
  KnnSettings knn;
  FlowSettings flow;
  DiagnosticSettings diagnostics;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;

  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Static checks; data-dependent ones (k against n_val) run once data exist.
  void validate() const;

  // Digest of to_json() without the output directory.
  std::string hash() const;
};

// Named seed for one pipeline stage, derived from the run seed.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

}  // namespace pitrecal
