#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pitrecal/config.hpp"
#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/diagnostics.hpp"
#include "pitrecal/flow/coupling.hpp"
#include "pitrecal/knn.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

struct Experiment {
  Dataset validation;
  Dataset test;
  std::shared_ptr<const PredictiveModel> model;
};

// Builds a base model from its JSON description for data with q features.
std::shared_ptr<const PredictiveModel> build_model(const ModelSpec& spec, std::size_t feature_dim);

// Generates or loads the validation and test sets and the base model.
Experiment prepare_experiment(const RunConfig& config);

// k for a validation set of size n_val; k > n_val raises ConfigError.
std::size_t knn_k(const KnnSettings& settings, std::size_t n_val);
NeighborIndex build_knn_index(const KnnSettings& settings, const Dataset& validation);

std::vector<std::size_t> flow_conditioning_columns(const FlowSettings& settings, std::size_t feature_dim);

CalibrationAssessment assess_base(const PredictiveModel& model, const Dataset& test,
                                  const DiagnosticSettings& settings, std::uint64_t seed);
CalibrationAssessment assess_knn(const KnnRecalibrator& knn, const Dataset& test,
                                 const DiagnosticSettings& settings, std::uint64_t seed);
CalibrationAssessment assess_flow(const flow::CouplingFlow& flow, const PredictiveModel& model,
                                  const Dataset& test, std::size_t samples,
                                  const DiagnosticSettings& settings, std::uint64_t seed);

// A failed stage; config_error marks errors that map to exit code 2.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const std::string& what, bool config_error)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), config_error_(config_error) {}
  const std::string& stage() const { return stage_; }
  bool config_error() const { return config_error_; }

 private:
  std::string stage_;
  bool config_error_;
};

// Output directory of a run: output_dir resolved against RECAL_OUTPUT_ROOT
// (or the working directory), defaulting to run-<config hash prefix>.
std::filesystem::path resolve_output_dir(const RunConfig& config);

struct RunSummary {
  std::filesystem::path directory;
  nlohmann::json report;
  nlohmann::json manifest;
};

// generate -> pit -> fit -> recalibrate -> diagnose. Writes pit.csv, pitn.csv,
// coppit.csv, kendall_diagram.csv, histograms.csv, report.json and
// manifest.json (plus base_* files and a flow checkpoint when a method is
// used). On failure the manifest records the stage and is marked partial.
RunSummary run_pipeline(const RunConfig& config);

// The config stored in a manifest written by run_pipeline.
RunConfig manifest_config(const std::filesystem::path& manifest_path);

// Writes manifest.json for the listed files of `dir`.
nlohmann::json write_manifest(const std::filesystem::path& dir, const nlohmann::json& config,
                              const std::string& config_hash, std::uint64_t seed,
                              const std::vector<std::string>& files, const std::string& failed_stage = {},
                              const std::string& error = {});

std::string code_version();

}  // namespace pitrecal
