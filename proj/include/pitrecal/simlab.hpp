#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

// n x 2 uniforms from a Gumbel copula with Kendall's tau in [0, 1), via the
// Marshall-Olkin construction with a positive stable frailty. tau = 0 gives
// independent uniforms.
RowMatrix gumbel_copula_sample(double tau, std::size_t n, Rng& rng);

// Draws one pair and returns -log(U_l) for both coordinates; keeping the
// exponent avoids losing precision in the upper tail.
void gumbel_copula_exponents(double tau, Rng& rng, double& r1, double& r2);

// Kendall's tau of paired samples, O(n log n), with tau-a tie handling.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// Parameters of the bivariate normal-margin Gumbel forecast at x = (x1, x2).
struct CopulaParams {
  double mu1 = 0.0;
  double var1 = 1.0;
  double mu2 = 0.0;
  double var2 = 1.0;
  double tau = 0.0;
};

// One of the eight forecasts, e.g. "FTF": letters for margin 1, margin 2 and
// the copula, T = correct and F = misspecified.
struct CopulaScenario {
  bool margin1_ok = true;
  bool margin2_ok = true;
  bool copula_ok = true;
  std::size_t n_val = 4000;
  std::size_t n_test = 4000;

  static CopulaScenario parse(const std::string& code);
  static std::vector<std::string> all_codes();
  std::string code() const;

  static CopulaParams truth(FeatureView x);
  CopulaParams forecast(FeatureView x) const;
};

// Gaussian margins joined by a Gumbel copula, all parameters functions of x.
class GaussianGumbelModel final : public PredictiveModel {
 public:
  using ParamFn = std::function<CopulaParams(FeatureView)>;

  GaussianGumbelModel(ParamFn params, std::string description);
  static std::shared_ptr<const GaussianGumbelModel> truth();
  static std::shared_ptr<const GaussianGumbelModel> forecast(const CopulaScenario& scenario);

  std::size_t dim() const override { return 2; }
  const MarginalCdf& marginal(std::size_t l) const override;
  RowMatrix joint_draw(FeatureView x, Rng& rng, std::size_t m) const override;
  std::string describe() const override { return description_; }
  CopulaParams params(FeatureView x) const { return params_(x); }

 private:
  ParamFn params_;
  std::string description_;
  GaussianMarginal m1_;
  GaussianMarginal m2_;
};

struct ScenarioData {
  CopulaScenario scenario;
  Dataset validation;
  Dataset test;
  std::shared_ptr<const GaussianGumbelModel> forecast;
  std::shared_ptr<const GaussianGumbelModel> truth;
};

// Covariates x1 ~ Beta(2, 5), x2 ~ Beta(5, 2), responses from the true model.
// Data depend only on the seed, so all eight forecasts share them.
ScenarioData scenario_dataset(const CopulaScenario& scenario, std::uint64_t seed);

struct TwistedScenario {
  std::size_t n_train = 5000;
  std::size_t n_val = 5000;
  std::size_t n_test = 1000;
};

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double variance = 1.0;  // residual variance, n - 2 denominator
};

// Ordinary least squares y = b0 + b1 x.
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

struct TwistedData {
  Dataset train;
  Dataset validation;
  Dataset test;
  LinearFit fits[2];
  std::shared_ptr<const IndependentModel> model;
};

// X ~ N(0, 1), Y1 ~ N(0, 1), Y2 = Y1 + X Y1^2; base model of two independent
// Gaussian linear regressions fitted on the training split.
TwistedData twisted_dataset(const TwistedScenario& scenario, std::uint64_t seed);

// P(Y2 <= t | X = x) under the twisted-Gaussians truth.
double twisted_y2_cdf(double t, double x);

// Draws (Y1, Y2) at X = x from the twisted-Gaussians truth.
RowMatrix twisted_truth_draw(double x, std::size_t n, Rng& rng);

struct RollingConfig {
  std::size_t length = 1000;
  std::size_t change_point = 500;
  std::size_t dim = 2;
  double phi = 0.5;
  double rho = 0.5;
  double bias = 1.5;
  double scale = 1.5;
};

// y_t = phi y_{t-1} + e_t with equicorrelated unit innovations; from
// change_point on, y_t = phi y_{t-1} + bias + scale e_t. The forecast is the
// fixed Gaussian N(phi y_{t-1}, 1) per margin. Rows are t = 1..length-1 with
// features y_{t-1}; times[i] = t.
struct RollingSeries {
  RollingConfig config;
  Dataset data;
  std::vector<double> times;
  std::shared_ptr<const IndependentModel> forecast;

  // First data row at or after the change.
  std::size_t change_row() const;
};

RollingSeries rolling_series_demo(const RollingConfig& config, std::uint64_t seed);

struct RollingCoverage {
  double base = 0.0;
  double knn = 0.0;
  std::size_t steps = 0;
};

// Empirical coverage of central intervals over the last `steps` rows,
// averaged over margins: the base forecast's exact interval against the
// interval from rolling-window KNN recalibration with the k latest PIT
// vectors. The PIT matrix of the series uses `pit_seed`.
RollingCoverage rolling_coverage(const RollingSeries& series, std::size_t k, std::size_t steps,
                                 double level, std::uint64_t pit_seed);

}  // namespace pitrecal
