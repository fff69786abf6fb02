#include "pitrecal/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "pitrecal/core/error.hpp"
#include "pitrecal/pit.hpp"

namespace pitrecal {

namespace {

std::vector<double> sorted_checked(std::span<const double> values) {
  std::vector<double> u(values.begin(), values.end());
  for (double v : u) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("uniformity statistic: value outside [0, 1]");
  }
  std::sort(u.begin(), u.end());
  return u;
}

}  // namespace

double cvm_uniform(std::span<const double> values) {
  if (values.size() < 2) throw DomainError("cvm_uniform: need at least 2 values");
  const std::vector<double> u = sorted_checked(values);
  const double n = static_cast<double>(u.size());
  double sum = 1.0 / (12.0 * n);
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double r = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n) - u[i];
    sum += r * r;
  }
  return sum;
}

double ks_uniform(std::span<const double> values) {
  if (values.empty()) throw DomainError("ks_uniform: empty sample");
  const std::vector<double> u = sorted_checked(values);
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double i_d = static_cast<double>(i);
    d = std::max({d, (i_d + 1.0) / n - u[i], u[i] - i_d / n});
  }
  return d;
}

std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw DomainError("histogram: bins must be positive");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("histogram: value outside [0, 1]");
    auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
    counts[std::min(b, bins - 1)] += 1;
  }
  return counts;
}

UniformityReport uniformity_report(std::span<const double> values, std::size_t bins) {
  UniformityReport r;
  r.n = values.size();
  r.cvm_statistic = cvm_uniform(values);
  r.ks_statistic = ks_uniform(values);
  r.histogram = histogram(values, bins);
  return r;
}

std::vector<CalibrationPoint> marginal_calibration_curve(const PredictiveModel& model,
                                                         std::size_t margin, const Dataset& data,
                                                         std::span<const double> y_grid) {
  if (y_grid.empty()) throw DomainError("marginal_calibration_curve: empty grid");
  if (margin >= model.dim() || margin >= data.response_dim()) {
    throw ConfigError("marginal_calibration_curve: margin out of range");
  }
  if (data.size() == 0) throw ConfigError("marginal_calibration_curve: empty data set");
  const auto& f = model.marginal(margin);
  std::vector<CalibrationPoint> curve;
  curve.reserve(y_grid.size());
  const double n = static_cast<double>(data.size());
  for (double y : y_grid) {
    double avg = 0.0;
    std::size_t below = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      avg += f.cdf(y, data.features(i));
      if (data.response(i)[margin] <= y) ++below;
    }
    curve.push_back({y, avg / n, static_cast<double>(below) / n});
  }
  return curve;
}

double max_calibration_gap(std::span<const CalibrationPoint> curve) {
  double gap = 0.0;
  for (const auto& p : curve) gap = std::max(gap, std::abs(p.avg_cdf - p.emp_cdf));
  return gap;
}

std::vector<double> CalibrationAssessment::coppit_values() const {
  std::vector<double> u;
  u.reserve(coppit.size());
  for (const auto& c : coppit) u.push_back(c.u);
  return u;
}

CalibrationAssessment assess_calibration(const ConditionalSampler& sampler,
                                         const PredictiveModel* marginals, const Dataset& data,
                                         const AssessConfig& config) {
  const std::size_t n = data.size();
  const std::size_t d = data.response_dim();
  if (n < 2) throw ConfigError("assessment needs at least 2 observations");
  if (marginals && marginals->dim() != d) throw ConfigError("assessment: model dimension mismatch");

  CalibrationAssessment out;
  out.marginal_pit = RowMatrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  out.coppit.reserve(n);
  KendallDiagramBuilder diagram(omega_grid(config.grid_points));

  for (std::size_t i = 0; i < n; ++i) {
    const FeatureView x = data.features(i);
    const FeatureView y = data.response(i);
    Rng rng = Rng::derive(config.seed, "assess", i);
    const RowMatrix sample = sampler(i, x, rng);
    if (static_cast<std::size_t>(sample.cols()) != d) {
      throw ConfigError("assessment: sampler returned the wrong dimension");
    }
    for (std::size_t l = 0; l < d; ++l) {
      const double nu = rng.uniform();
      double p = 0.0;
      if (marginals) {
        p = randomized_pit(marginals->marginal(l), x, y[l], nu);
      } else {
        const auto col = static_cast<Eigen::Index>(l);
        std::vector<double> s(static_cast<std::size_t>(sample.rows()));
        for (Eigen::Index r = 0; r < sample.rows(); ++r) s[static_cast<std::size_t>(r)] = sample(r, col);
        const double lo = empirical_cdf_left(s, y[l]);
        p = lo + nu * (empirical_cdf(s, y[l]) - lo);
      }
      out.marginal_pit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = p;
    }
    const KendallSample ks = pseudo_observations(sample);
    const CoppitResult c = coppit_from_sample(sample, ks, y, rng.uniform());
    diagram.add(c.joint_cdf, ks);
    out.coppit.push_back(c);
  }

  for (std::size_t l = 0; l < d; ++l) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = out.marginal_pit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
    }
    out.margins.push_back(uniformity_report(col, config.bins));
  }
  out.coppit_report = uniformity_report(out.coppit_values(), config.bins);
  out.kendall = diagram.finish();
  out.kendall_gap = max_kendall_gap(out.kendall);
  return out;
}

nlohmann::json to_json(const UniformityReport& report) {
  return {{"n", report.n},
          {"cvm_statistic", report.cvm_statistic},
          {"ks_statistic", report.ks_statistic},
          {"cvm_critical_5pct", kCvmCritical5},
          {"histogram", report.histogram}};
}

nlohmann::json to_json(const CalibrationAssessment& a) {
  nlohmann::json margins = nlohmann::json::array();
  for (const auto& m : a.margins) margins.push_back(to_json(m));
  return {{"margins", margins},
          {"coppit", to_json(a.coppit_report)},
          {"kendall_max_gap", a.kendall_gap},
          {"clamp_count", a.clamp_count}};
}

}  // namespace pitrecal
