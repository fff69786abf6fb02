#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/kendall.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

// Asymptotic critical values of the Cramer-von Mises statistic under uniformity.
inline constexpr double kCvmCritical5 = 0.461;
inline constexpr double kCvmCritical1 = 0.743;

// W^2 = 1/(12n) + sum_i ((2i-1)/(2n) - u_(i))^2. Needs n >= 2 and values in [0, 1].
double cvm_uniform(std::span<const double> values);

// sup_t |F_n(t) - t|.
double ks_uniform(std::span<const double> values);

// Equal-width bins on [0, 1], left-closed, the last bin also closed on the right.
std::vector<std::size_t> histogram(std::span<const double> values, std::size_t bins = 20);

struct UniformityReport {
  double cvm_statistic = 0.0;
  double ks_statistic = 0.0;
  std::vector<std::size_t> histogram;
  std::size_t n = 0;
};

UniformityReport uniformity_report(std::span<const double> values, std::size_t bins = 20);

struct CalibrationPoint {
  double y = 0.0;
  double avg_cdf = 0.0;  // mean predictive CDF at y
  double emp_cdf = 0.0;  // empirical CDF of the observations at y
};

// Marginal calibration of margin l over a data set.
std::vector<CalibrationPoint> marginal_calibration_curve(const PredictiveModel& model,
                                                         std::size_t margin, const Dataset& data,
                                                         std::span<const double> y_grid);

double max_calibration_gap(std::span<const CalibrationPoint> curve);

// Returns a joint sample from a (possibly recalibrated) forecast for test row
// i with features x.
using ConditionalSampler = std::function<RowMatrix(std::size_t i, FeatureView x, Rng& rng)>;

struct AssessConfig {
  std::uint64_t seed = 0;
  std::size_t grid_points = 21;
  std::size_t bins = 20;
};

struct CalibrationAssessment {
  RowMatrix marginal_pit;  // n x d
  std::vector<CoppitResult> coppit;
  std::vector<KendallDiagramPoint> kendall;
  std::vector<UniformityReport> margins;
  UniformityReport coppit_report;
  double kendall_gap = 0.0;
  std::size_t clamp_count = 0;

  std::vector<double> coppit_values() const;
};

// Scores a forecast on a data set. Row i draws from substream (seed, "assess",
// i): the sampler first, then one randomization variate per margin, then the
// CopPIT variate. Marginal PITs use the closed-form marginals when `marginals`
// is given and the randomized empirical PIT of the sample otherwise; CopPIT and
// the Kendall diagram always come from the sample.
CalibrationAssessment assess_calibration(const ConditionalSampler& sampler,
                                         const PredictiveModel* marginals, const Dataset& data,
                                         const AssessConfig& config);

nlohmann::json to_json(const UniformityReport& report);
nlohmann::json to_json(const CalibrationAssessment& assessment);

}  // namespace pitrecal
