#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "pitrecal/config.hpp"
#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"
#include "pitrecal/diagnostics.hpp"
#include "pitrecal/flow/checkpoint.hpp"
#include "pitrecal/flow/train.hpp"
#include "pitrecal/knn.hpp"
#include "pitrecal/pipeline.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/simlab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pitrecal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

fs::path output_root() {
  if (const char* env = std::getenv("RECAL_OUTPUT_ROOT"); env && *env) return env;
  return fs::current_path();
}

fs::path under_root(const fs::path& p) { return p.is_relative() ? output_root() / p : p; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RowMatrix read_queries(const fs::path& path, std::size_t q) {
  const CsvTable t = read_csv(path);
  if (t.header != numbered_columns("x", t.header.size())) {
    throw SchemaError("query file must have header x1..xq");
  }
  if (t.header.size() != q) {
    throw SchemaError("query file has " + std::to_string(t.header.size()) + " feature columns, expected " +
                      std::to_string(q));
  }
  return t.values;
}

void write_samples(const fs::path& path, const std::vector<RowMatrix>& per_query, std::size_t d) {
  std::size_t rows = 0;
  for (const auto& s : per_query) rows += static_cast<std::size_t>(s.rows());
  RowMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d + 1));
  Eigen::Index r = 0;
  for (std::size_t q = 0; q < per_query.size(); ++q) {
    for (Eigen::Index i = 0; i < per_query[q].rows(); ++i, ++r) {
      out(r, 0) = static_cast<double>(q + 1);
      out.row(r).tail(static_cast<Eigen::Index>(d)) = per_query[q].row(i);
    }
  }
  std::vector<std::string> header = {"query"};
  for (const auto& h : numbered_columns("y", d)) header.push_back(h);
  write_csv(path, header, out);
}

int cmd_sim(const std::string& scenario, std::uint64_t seed, const fs::path& out_arg, std::size_t n_val,
            std::size_t n_test) {
  const fs::path dir = under_root(out_arg);
  fs::create_directories(dir);
  std::vector<std::string> files;
  json model;
  json data_cfg = {{"source", "csv"}, {"validation", "validation.csv"}, {"test", "test.csv"}};
  if (scenario == "twisted") {
    TwistedScenario ts;
    if (n_val) ts.n_val = n_val;
    if (n_test) ts.n_test = n_test;
    const TwistedData d = twisted_dataset(ts, seed);
    write_dataset(dir / "train.csv", d.train);
    write_dataset(dir / "validation.csv", d.validation);
    write_dataset(dir / "test.csv", d.test);
    files = {"train.csv", "validation.csv", "test.csv"};
    json margins = json::array();
    for (const auto& f : d.fits) {
      margins.push_back({{"intercept", f.intercept}, {"slopes", {f.slope}}, {"sd", std::sqrt(f.variance)}});
    }
    model = {{"type", "independent_gaussian_linear"}, {"margins", margins}};
  } else if (scenario == "rolling") {
    const RollingSeries s = rolling_series_demo(RollingConfig{}, seed);
    write_dataset(dir / "series.csv", s.data);
    RowMatrix times(static_cast<Eigen::Index>(s.times.size()), 1);
    for (std::size_t i = 0; i < s.times.size(); ++i) times(static_cast<Eigen::Index>(i), 0) = s.times[i];
    write_csv(dir / "times.csv", {"time"}, times);
    files = {"series.csv", "times.csv"};
    json margins = json::array();
    for (std::size_t l = 0; l < s.config.dim; ++l) {
      std::vector<double> slopes(s.config.dim, 0.0);
      slopes[l] = s.config.phi;
      margins.push_back({{"intercept", 0.0}, {"slopes", slopes}, {"sd", 1.0}});
    }
    model = {{"type", "independent_gaussian_linear"}, {"margins", margins}};
    data_cfg = {{"source", "csv"}, {"validation", "series.csv"}, {"test", "series.csv"}};
  } else {
    CopulaScenario cs = CopulaScenario::parse(scenario);
    if (n_val) cs.n_val = n_val;
    if (n_test) cs.n_test = n_test;
    const ScenarioData d = scenario_dataset(cs, seed);
    write_dataset(dir / "validation.csv", d.validation);
    write_dataset(dir / "test.csv", d.test);
    files = {"validation.csv", "test.csv"};
    model = {{"type", "gumbel_scenario"}, {"scenario", cs.code()}};
  }
  write_json(dir / "model.json", model);
  files.push_back("model.json");
  json run = {{"data", data_cfg}, {"model", model}, {"seed", seed}, {"method", "none"}};
  write_json(dir / "run.json", run);
  files.push_back("run.json");
  json sim_cfg = {{"verb", "sim"}, {"scenario", scenario}, {"seed", seed}, {"n_val", n_val}, {"n_test", n_test}};
  write_manifest(dir, sim_cfg, sha256_hex(sim_cfg.dump()), seed, files);
  std::cout << dir.string() << '\n';
  return kExitOk;
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed) {
  RunConfig c = RunConfig::load(path);
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

int cmd_pit(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& out_arg) {
  const RunConfig c = load_config(config_path, seed);
  const Experiment ex = prepare_experiment(c);
  const PitMatrix pit = pit_matrix(*ex.model, ex.validation, stage_seed(c.seed, "pit"));
  const fs::path dir = under_root(out_arg.empty() ? resolve_output_dir(c) : out_arg);
  fs::create_directories(dir);
  write_pit_csv((dir / "pit.csv").string(), pit);
  write_normalized_pit_csv((dir / "pitn.csv").string(), pit);
  std::cerr << "pit: " << pit.size() << " rows, " << pit.clamp_count << " clamp events\n";
  std::cout << dir.string() << '\n';
  return kExitOk;
}

int cmd_knn(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& query,
            const fs::path& out) {
  const RunConfig c = load_config(config_path, seed);
  const Experiment ex = prepare_experiment(c);
  const PitMatrix pit = pit_matrix(*ex.model, ex.validation, stage_seed(c.seed, "pit"));
  const std::size_t k = knn_k(c.knn, ex.validation.size());
  const KnnRecalibrator knn(ex.model, pit, build_knn_index(c.knn, ex.validation), k);
  const RowMatrix queries = read_queries(query, ex.validation.feature_dim());
  std::vector<RowMatrix> samples;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) samples.push_back(knn.sample(row_view(queries, i)));
  write_samples(under_root(out), samples, ex.model->dim());
  return kExitOk;
}

int cmd_flow_train(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& out) {
  const RunConfig c = load_config(config_path, seed);
  const Experiment ex = prepare_experiment(c);
  const PitMatrix pit = pit_matrix(*ex.model, ex.validation, stage_seed(c.seed, "pit"));
  flow::CouplingFlow f(ex.model->dim(), flow_conditioning_columns(c.flow, ex.validation.feature_dim()),
                       c.flow.architecture, stage_seed(c.seed, "flow-init"));
  flow::TrainConfig tc = c.flow.training;
  tc.seed = stage_seed(c.seed, "flow-train");
  const flow::TrainResult r = flow::train_flow(f, pit, ex.validation.x, tc);
  const fs::path path = under_root(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  flow::save_flow(path, f);
  std::cerr << "flow: " << r.epochs_run << " epochs, best epoch " << r.best_epoch << ", loss "
            << r.initial_loss << " -> " << r.final_loss() << '\n';
  return kExitOk;
}

int cmd_flow_sample(const fs::path& config_path, std::optional<std::uint64_t> seed, const fs::path& checkpoint,
                    const fs::path& query, std::size_t n, const fs::path& out) {
  const RunConfig c = load_config(config_path, seed);
  const Experiment ex = prepare_experiment(c);
  const flow::CouplingFlow f = flow::load_flow(checkpoint);
  const RowMatrix queries = read_queries(query, ex.validation.feature_dim());
  std::vector<RowMatrix> samples;
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Rng rng = Rng::derive(stage_seed(c.seed, "flow-sample"), "query", static_cast<std::uint64_t>(i));
    samples.push_back(flow::sample_recalibrated(f, *ex.model, row_view(queries, i), n, rng));
  }
  write_samples(under_root(out), samples, ex.model->dim());
  return kExitOk;
}

int cmd_diagnose(const fs::path& values_path, std::size_t bins, const fs::path& out) {
  const CsvTable t = read_csv(values_path);
  json report = json::object();
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    std::vector<double> col(static_cast<std::size_t>(t.values.rows()));
    for (Eigen::Index r = 0; r < t.values.rows(); ++r) col[static_cast<std::size_t>(r)] = t.values(r, static_cast<Eigen::Index>(c));
    report[t.header[c]] = to_json(uniformity_report(col, bins));
  }
  if (out.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_json(under_root(out), report);
  }
  return kExitOk;
}

int cmd_run(const fs::path& config_path, const fs::path& manifest_path, std::optional<std::uint64_t> seed,
            const std::string& method, const fs::path& out) {
  RunConfig c = manifest_path.empty() ? RunConfig::load(config_path) : manifest_config(manifest_path);
  if (seed) c.seed = *seed;
  if (!method.empty()) {
    RunConfig tmp = RunConfig::from_json(json{{"method", method}});
    c.method = tmp.method;
  }
  if (!out.empty()) c.output_dir = out;
  const RunSummary s = run_pipeline(c);
  std::cout << s.directory.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate forecast recalibration from localized PIT vectors"};
  app.set_version_flag("--version", code_version());
  app.require_subcommand(1);

  std::string scenario = "TTT";
  std::uint64_t seed_value = 0;
  std::size_t n_val = 0, n_test = 0, n_draws = 1000, bins = 20;
  fs::path out, config, query, checkpoint, manifest, values;
  std::string method;

  auto* sim = app.add_subcommand("sim", "Generate a synthetic scenario (TTT..FFF, twisted, rolling)");
  sim->add_option("--scenario", scenario, "Scenario code")->required();
  sim->add_option("--seed", seed_value, "Seed")->required();
  sim->add_option("--out", out, "Output directory")->required();
  sim->add_option("--n-val", n_val, "Validation size");
  sim->add_option("--n-test", n_test, "Test size");

  auto* pit = app.add_subcommand("pit", "Compute the validation PIT matrix");
  pit->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  auto* pit_seed = pit->add_option("--seed", seed_value, "Override the run seed");
  pit->add_option("--out", out, "Output directory");

  auto* recal = app.add_subcommand("recal", "Recalibration");
  recal->require_subcommand(1);
  auto* knn = recal->add_subcommand("knn", "KNN recalibrated samples for query points");
  knn->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  knn->add_option("--query", query, "Query CSV (x1..xq)")->required()->check(CLI::ExistingFile);
  knn->add_option("--out", out, "Output samples CSV")->required();
  auto* knn_seed = knn->add_option("--seed", seed_value, "Override the run seed");

  auto* ft = recal->add_subcommand("flow-train", "Train a conditional flow on the validation PIT");
  ft->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  ft->add_option("--out", out, "Checkpoint path")->required();
  auto* ft_seed = ft->add_option("--seed", seed_value, "Override the run seed");

  auto* fsmp = recal->add_subcommand("flow-sample", "Sample a trained flow at query points");
  fsmp->add_option("--config", config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  fsmp->add_option("--checkpoint", checkpoint, "Flow checkpoint")->required()->check(CLI::ExistingFile);
  fsmp->add_option("--query", query, "Query CSV (x1..xq)")->required()->check(CLI::ExistingFile);
  fsmp->add_option("--n", n_draws, "Draws per query");
  fsmp->add_option("--out", out, "Output samples CSV")->required();
  auto* fs_seed = fsmp->add_option("--seed", seed_value, "Override the run seed");

  auto* diag = app.add_subcommand("diagnose", "Uniformity report for each column of a CSV of PIT values");
  diag->add_option("--values", values, "CSV with values in [0, 1]")->required()->check(CLI::ExistingFile);
  diag->add_option("--bins", bins, "Histogram bins");
  diag->add_option("--out", out, "Report JSON (stdout when omitted)");

  auto* run = app.add_subcommand("run", "Full pipeline");
  auto* run_cfg = run->add_option("--config", config, "Run config (JSON)")->check(CLI::ExistingFile);
  auto* run_man = run->add_option("--manifest", manifest, "Re-run a manifest")->check(CLI::ExistingFile);
  run_cfg->excludes(run_man);
  auto* run_seed = run->add_option("--seed", seed_value, "Override the run seed");
  run->add_option("--method", method, "Override the method (none, knn, flow)");
  run->add_option("--out", out, "Override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  auto opt_seed = [&](CLI::Option* o) {
    return o->count() ? std::optional<std::uint64_t>(seed_value) : std::nullopt;
  };

  try {
    if (*sim) return cmd_sim(scenario, seed_value, out, n_val, n_test);
    if (*pit) return cmd_pit(config, opt_seed(pit_seed), out);
    if (*knn) return cmd_knn(config, opt_seed(knn_seed), query, out);
    if (*ft) return cmd_flow_train(config, opt_seed(ft_seed), out);
    if (*fsmp) return cmd_flow_sample(config, opt_seed(fs_seed), checkpoint, query, n_draws, out);
    if (*diag) return cmd_diagnose(values, bins, out);
    if (*run) {
      if (!run_cfg->count() && !run_man->count()) {
        std::cerr << "error: run needs --config or --manifest\n";
        return kExitConfig;
      }
      return cmd_run(config, manifest, opt_seed(run_seed), method, out);
    }
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.config_error() ? kExitConfig : kExitRuntime;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
