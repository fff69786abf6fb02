#include "pitrecal/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>

#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/hash.hpp"
#include "pitrecal/flow/checkpoint.hpp"
#include "pitrecal/flow/train.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/simlab.hpp"

#ifndef PITRECAL_VERSION
#define PITRECAL_VERSION "0.0.0"
#endif

namespace pitrecal {

using nlohmann::json;

std::string code_version() { return PITRECAL_VERSION; }

std::shared_ptr<const PredictiveModel> build_model(const ModelSpec& spec, std::size_t feature_dim) {
  try {
    if (spec.type == "gumbel_scenario") {
      if (feature_dim < 2) throw ConfigError("gumbel_scenario model needs two features");
      const auto scenario = CopulaScenario::parse(spec.params.value("scenario", std::string("TTT")));
      return GaussianGumbelModel::forecast(scenario);
    }
    if (spec.type == "independent_gaussian_linear") {
      const json& margins = spec.params.at("margins");
      if (!margins.is_array() || margins.empty()) throw ConfigError("model.margins must be a nonempty array");
      std::vector<std::shared_ptr<const MarginalCdf>> out;
      for (const json& m : margins) {
        const double intercept = m.value("intercept", 0.0);
        const auto slopes = m.value("slopes", std::vector<double>(feature_dim, 0.0));
        const double sd = m.at("sd").get<double>();
        if (slopes.size() != feature_dim) {
          throw ConfigError("model margin has " + std::to_string(slopes.size()) + " slopes for " +
                            std::to_string(feature_dim) + " features");
        }
        if (!(sd > 0.0)) throw ConfigError("model margin sd must be positive");
        std::string desc = "linear-gaussian(" + format_double(intercept);
        for (double s : slopes) desc += "," + format_double(s);
        desc += ";" + format_double(sd) + ")";
        out.push_back(std::make_shared<GaussianMarginal>(
            [intercept, slopes, sd](FeatureView x) {
              double mu = intercept;
              for (std::size_t j = 0; j < slopes.size(); ++j) mu += slopes[j] * x[j];
              return NormalParams{mu, sd};
            },
            desc));
      }
      return std::make_shared<IndependentModel>(std::move(out));
    }
    if (spec.type == "samples") {
      const CsvTable t = read_csv(spec.params.at("path").get<std::string>());
      if (t.header != numbered_columns("y", t.header.size())) {
        throw SchemaError("model sample file must have header y1..yd");
      }
      return std::make_shared<SampleModel>(t.values);
    }
  } catch (const json::exception& e) {
    throw ConfigError("model section: " + std::string(e.what()));
  }
  throw ConfigError("unknown model type '" + spec.type + "'");
}

Experiment prepare_experiment(const RunConfig& config) {
  Experiment e;
  switch (config.source) {
    case DataSource::Scenario: {
      CopulaScenario s = CopulaScenario::parse(config.scenario);
      s.n_val = config.n_val;
      s.n_test = config.n_test;
      ScenarioData data = scenario_dataset(s, config.seed);
      e.validation = std::move(data.validation);
      e.test = std::move(data.test);
      e.model = data.forecast;
      break;
    }
    case DataSource::Twisted: {
      TwistedData data = twisted_dataset(config.twisted, config.seed);
      e.validation = std::move(data.validation);
      e.test = std::move(data.test);
      e.model = data.model;
      break;
    }
    case DataSource::Csv: {
      e.validation = ingest_csv(config.validation_path);
      e.test = ingest_csv(config.test_path);
      if (e.validation.feature_dim() != e.test.feature_dim() ||
          e.validation.response_dim() != e.test.response_dim()) {
        throw ConfigError("validation and test files have different columns");
      }
      break;
    }
  }
  if (!config.model.type.empty()) e.model = build_model(config.model, e.validation.feature_dim());
  if (!e.model) throw ConfigError("no base model configured");
  if (e.model->dim() != e.validation.response_dim()) {
    throw ConfigError("model dimension " + std::to_string(e.model->dim()) + " does not match " +
                      std::to_string(e.validation.response_dim()) + " responses");
  }
  return e;
}

std::size_t knn_k(const KnnSettings& settings, std::size_t n_val) {
  const std::size_t k = settings.k ? *settings.k : resolve_k(n_val, settings.k_fraction);
  if (k == 0 || k > n_val) {
    throw ConfigError("knn.k (" + std::to_string(k) + ") exceeds n_val (" + std::to_string(n_val) + ")");
  }
  return k;
}

NeighborIndex build_knn_index(const KnnSettings& settings, const Dataset& validation) {
  FeatureMap map = settings.feature_columns.empty() ? FeatureMap::identity(validation.feature_dim())
                                                    : FeatureMap::select(settings.feature_columns);
  if (map.input_dim_required() > validation.feature_dim()) {
    throw ConfigError("knn.feature_columns selects a column beyond the feature dimension");
  }
  if (settings.standardize) map.fit_standardization(validation.x);
  return NeighborIndex::euclidean(validation, std::move(map));
}

std::vector<std::size_t> flow_conditioning_columns(const FlowSettings& settings, std::size_t feature_dim) {
  std::vector<std::size_t> cols = settings.conditioning_columns;
  if (cols.empty()) {
    cols.resize(feature_dim);
    for (std::size_t j = 0; j < feature_dim; ++j) cols[j] = j;
  }
  for (std::size_t c : cols) {
    if (c >= feature_dim) throw ConfigError("flow.conditioning_columns selects a column beyond the feature dimension");
  }
  return cols;
}

namespace {

AssessConfig assess_config(const DiagnosticSettings& s, std::uint64_t seed) {
  AssessConfig c;
  c.seed = seed;
  c.grid_points = s.grid_points;
  c.bins = s.bins;
  return c;
}

}  // namespace

CalibrationAssessment assess_base(const PredictiveModel& model, const Dataset& test,
                                  const DiagnosticSettings& settings, std::uint64_t seed) {
  const std::size_t m = settings.m;
  return assess_calibration(
      [&model, m](std::size_t, FeatureView x, Rng& rng) { return model.joint_draw(x, rng, m); }, &model,
      test, assess_config(settings, seed));
}

CalibrationAssessment assess_knn(const KnnRecalibrator& knn, const Dataset& test,
                                 const DiagnosticSettings& settings, std::uint64_t seed) {
  return assess_calibration([&knn](std::size_t, FeatureView x, Rng&) { return knn.sample(x); }, nullptr,
                            test, assess_config(settings, seed));
}

CalibrationAssessment assess_flow(const flow::CouplingFlow& flow, const PredictiveModel& model,
                                  const Dataset& test, std::size_t samples,
                                  const DiagnosticSettings& settings, std::uint64_t seed) {
  ClampTally tally;
  CalibrationAssessment a = assess_calibration(
      [&](std::size_t, FeatureView x, Rng& rng) {
        return flow::sample_recalibrated(flow, model, x, samples, rng, &tally);
      },
      nullptr, test, assess_config(settings, seed));
  a.clamp_count = tally.count;
  return a;
}

std::filesystem::path resolve_output_dir(const RunConfig& config) {
  std::filesystem::path root = std::filesystem::current_path();
  if (const char* env = std::getenv("RECAL_OUTPUT_ROOT"); env && *env) root = env;
  std::filesystem::path dir = config.output_dir;
  if (dir.empty()) dir = "run-" + config.hash().substr(0, 12);
  if (dir.is_relative()) dir = root / dir;
  return dir.lexically_normal();
}

json write_manifest(const std::filesystem::path& dir, const json& config, const std::string& config_hash,
                    std::uint64_t seed, const std::vector<std::string>& files, const std::string& failed_stage,
                    const std::string& error) {
  json hashes = json::object();
  for (const auto& f : files) {
    if (std::filesystem::exists(dir / f)) hashes[f] = sha256_file(dir / f);
  }
  json manifest = {{"tool", "recal"},
                   {"version", code_version()},
                   {"config", config},
                   {"config_sha256", config_hash},
                   {"seed", seed},
                   {"status", failed_stage.empty() ? "ok" : "failed"},
                   {"partial", !failed_stage.empty()},
                   {"files", hashes}};
  if (!failed_stage.empty()) {
    manifest["failed_stage"] = failed_stage;
    manifest["error"] = error;
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  return manifest;
}

namespace {

void write_coppit_csv(const std::filesystem::path& path, const CalibrationAssessment& a) {
  RowMatrix v(static_cast<Eigen::Index>(a.coppit.size()), 1);
  for (std::size_t i = 0; i < a.coppit.size(); ++i) v(static_cast<Eigen::Index>(i), 0) = a.coppit[i].u;
  write_csv(path, {"coppit"}, v);
}

void write_kendall_csv(const std::filesystem::path& path, const CalibrationAssessment& a) {
  RowMatrix v(static_cast<Eigen::Index>(a.kendall.size()), 3);
  for (std::size_t i = 0; i < a.kendall.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    v(r, 0) = a.kendall[i].omega;
    v(r, 1) = a.kendall[i].lhs;
    v(r, 2) = a.kendall[i].rhs;
  }
  write_csv(path, {"omega", "lhs", "rhs"}, v);
}

void write_histograms_csv(const std::filesystem::path& path, std::size_t bins,
                          const std::vector<std::pair<std::string, const CalibrationAssessment*>>& parts) {
  std::vector<std::string> header = {"bin_lower", "bin_upper"};
  std::vector<const std::vector<std::size_t>*> cols;
  for (const auto& [prefix, a] : parts) {
    for (std::size_t l = 0; l < a->margins.size(); ++l) {
      header.push_back(prefix + "p" + std::to_string(l + 1));
      cols.push_back(&a->margins[l].histogram);
    }
    header.push_back(prefix + "coppit");
    cols.push_back(&a->coppit_report.histogram);
  }
  RowMatrix v(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(header.size()));
  for (std::size_t b = 0; b < bins; ++b) {
    const auto r = static_cast<Eigen::Index>(b);
    v(r, 0) = static_cast<double>(b) / static_cast<double>(bins);
    v(r, 1) = static_cast<double>(b + 1) / static_cast<double>(bins);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      v(r, static_cast<Eigen::Index>(c + 2)) = static_cast<double>((*cols[c])[b]);
    }
  }
  write_csv(path, header, v);
}

void write_loss_csv(const std::filesystem::path& path, const flow::TrainResult& r) {
  RowMatrix v(static_cast<Eigen::Index>(r.epochs_run), 4);
  for (std::size_t e = 0; e < r.epochs_run; ++e) {
    const auto i = static_cast<Eigen::Index>(e);
    v(i, 0) = static_cast<double>(e + 1);
    v(i, 1) = r.train_loss[e];
    v(i, 2) = r.holdout_loss[e];
    v(i, 3) = r.best_loss[e];
  }
  write_csv(path, {"epoch", "train_loss", "holdout_loss", "best_loss"}, v);
}

}  // namespace

RunSummary run_pipeline(const RunConfig& config) {
  try {
    config.validate();
  } catch (const Error& e) {
    throw PipelineError("config", e.what(), true);
  }
  RunSummary summary;
  summary.directory = resolve_output_dir(config);
  const auto& dir = summary.directory;
  std::filesystem::create_directories(dir);
  const json config_json = config.to_json();
  const std::string config_hash = config.hash();

  std::vector<std::string> files;
  std::string stage;
  json report = {{"method", to_string(config.method)},
                 {"source", to_string(config.source)},
                 {"seed", config.seed},
                 {"config_sha256", config_hash}};
  if (config.source == DataSource::Scenario) report["scenario"] = config.scenario;

  auto fail = [&](const std::string& what, bool config_error) -> PipelineError {
    try {
      summary.manifest = write_manifest(dir, config_json, config_hash, config.seed, files, stage, what);
    } catch (...) {
    }
    return PipelineError(stage, what, config_error);
  };

  try {
    stage = "generate";
    Experiment ex = prepare_experiment(config);
    if (config.source != DataSource::Csv) {
      write_dataset(dir / "validation.csv", ex.validation);
      write_dataset(dir / "test.csv", ex.test);
      files.insert(files.end(), {"validation.csv", "test.csv"});
    }
    report["n_val"] = ex.validation.size();
    report["n_test"] = ex.test.size();
    report["model"] = ex.model->describe();
    report["model_fingerprint"] = ex.model->fingerprint();

    stage = "pit";
    const PitMatrix pit = pit_matrix(*ex.model, ex.validation, stage_seed(config.seed, "pit"));
    write_pit_csv((dir / "pit.csv").string(), pit);
    write_normalized_pit_csv((dir / "pitn.csv").string(), pit);
    files.insert(files.end(), {"pit.csv", "pitn.csv"});
    report["pit_clamp_count"] = pit.clamp_count;

    stage = "fit";
    std::unique_ptr<KnnRecalibrator> knn;
    std::unique_ptr<flow::CouplingFlow> flow_model;
    if (config.method == Method::Knn) {
      const std::size_t k = knn_k(config.knn, ex.validation.size());
      knn = std::make_unique<KnnRecalibrator>(ex.model, pit, build_knn_index(config.knn, ex.validation), k);
      report["knn"] = {{"k", k}, {"feature_map", knn->index().feature_map().describe()}};
    } else if (config.method == Method::Flow) {
      flow_model = std::make_unique<flow::CouplingFlow>(
          ex.model->dim(), flow_conditioning_columns(config.flow, ex.validation.feature_dim()),
          config.flow.architecture, stage_seed(config.seed, "flow-init"));
      flow::TrainConfig tc = config.flow.training;
      tc.seed = stage_seed(config.seed, "flow-train");
      const flow::TrainResult tr = flow::train_flow(*flow_model, pit, ex.validation.x, tc);
      flow::save_flow(dir / "flow.ckpt", *flow_model);
      write_loss_csv(dir / "flow_loss.csv", tr);
      files.insert(files.end(), {"flow.ckpt", "flow_loss.csv"});
      report["flow_training"] = {{"epochs_run", tr.epochs_run},
                                 {"best_epoch", tr.best_epoch},
                                 {"early_stopped", tr.early_stopped},
                                 {"initial_loss", tr.initial_loss},
                                 {"final_loss", tr.final_loss()},
                                 {"parameters", flow_model->parameter_count()}};
    }

    stage = "diagnose";
    const CalibrationAssessment base =
        assess_base(*ex.model, ex.test, config.diagnostics, stage_seed(config.seed, "assess-base"));
    report["base"] = to_json(base);

    std::vector<std::pair<std::string, const CalibrationAssessment*>> parts;
    if (config.method == Method::None) {
      write_coppit_csv(dir / "coppit.csv", base);
      write_kendall_csv(dir / "kendall_diagram.csv", base);
      files.insert(files.end(), {"coppit.csv", "kendall_diagram.csv"});
      parts.push_back({"base_", &base});
      write_histograms_csv(dir / "histograms.csv", config.diagnostics.bins, parts);
      files.push_back("histograms.csv");
    } else {
      stage = "recalibrate";
      const std::uint64_t recal_seed = stage_seed(config.seed, "assess-recal");
      const CalibrationAssessment recal =
          knn ? assess_knn(*knn, ex.test, config.diagnostics, recal_seed)
              : assess_flow(*flow_model, *ex.model, ex.test, config.flow.samples, config.diagnostics, recal_seed);
      stage = "diagnose";
      report["recalibrated"] = to_json(recal);
      write_coppit_csv(dir / "base_coppit.csv", base);
      write_kendall_csv(dir / "base_kendall_diagram.csv", base);
      write_coppit_csv(dir / "coppit.csv", recal);
      write_kendall_csv(dir / "kendall_diagram.csv", recal);
      files.insert(files.end(), {"base_coppit.csv", "base_kendall_diagram.csv", "coppit.csv", "kendall_diagram.csv"});
      parts.push_back({"base_", &base});
      parts.push_back({"recal_", &recal});
      write_histograms_csv(dir / "histograms.csv", config.diagnostics.bins, parts);
      files.push_back("histograms.csv");
    }

    stage = "report";
    std::ofstream out(dir / "report.json", std::ios::trunc);
    if (!out) throw Error("cannot write report.json");
    out << report.dump(2) << '\n';
    out.close();
    files.push_back("report.json");
    summary.report = report;
    summary.manifest = write_manifest(dir, config_json, config_hash, config.seed, files);
    return summary;
  } catch (const PipelineError&) {
    throw;
  } catch (const ConfigError& e) {
    throw fail(e.what(), true);
  } catch (const SchemaError& e) {
    throw fail(e.what(), true);
  } catch (const std::exception& e) {
    throw fail(e.what(), false);
  }
}

RunConfig manifest_config(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw ConfigError("cannot open manifest " + manifest_path.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!m.contains("config")) throw ConfigError("manifest has no config section");
  RunConfig c = RunConfig::from_json(m.at("config"), manifest_path.parent_path());
  if (m.contains("config_sha256") && m.at("config_sha256").get<std::string>() != c.hash()) {
    throw ConfigError("manifest config does not match its recorded hash");
  }
  return c;
}

}  // namespace pitrecal
