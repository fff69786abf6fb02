#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"

namespace pitrecal {

// One conditional marginal F_l(. | x) of a base forecast.
//
// quantile() is the generalized inverse inf{y : cdf(y, x) >= p}. For
// continuous marginals cdf_left coincides with cdf; discrete or empirical
// marginals report the true left limit, which the randomized PIT needs.
class MarginalCdf {
 public:
  virtual ~MarginalCdf() = default;

  virtual double cdf(double y, FeatureView x) const = 0;
  virtual double cdf_left(double y, FeatureView x) const { return cdf(y, x); }
  virtual double quantile(double p, FeatureView x) const = 0;
  virtual double draw(FeatureView x, Rng& rng) const { return quantile(rng.uniform_open(), x); }
  virtual bool is_continuous() const { return true; }

  // Stable text descriptor; feeds model fingerprints.
  virtual std::string describe() const = 0;
};

struct NormalParams {
  double mean = 0.0;
  double sd = 1.0;
};

// Gaussian marginal whose mean and standard deviation are functions of x.
class GaussianMarginal final : public MarginalCdf {
 public:
  using ParamFn = std::function<NormalParams(FeatureView)>;

  GaussianMarginal(ParamFn params, std::string description);
  // Constant N(mean, sd^2).
  GaussianMarginal(double mean, double sd);

  NormalParams params(FeatureView x) const;
  double cdf(double y, FeatureView x) const override;
  double quantile(double p, FeatureView x) const override;
  double draw(FeatureView x, Rng& rng) const override;
  std::string describe() const override { return description_; }

 private:
  ParamFn params_;
  std::string description_;
};

// Finitely supported marginal, independent of x.
class DiscreteMarginal final : public MarginalCdf {
 public:
  DiscreteMarginal(std::vector<double> support, std::vector<double> probabilities);

  static DiscreteMarginal bernoulli(double success_probability);

  double cdf(double y, FeatureView x) const override;
  double cdf_left(double y, FeatureView x) const override;
  double quantile(double p, FeatureView x) const override;
  bool is_continuous() const override { return false; }
  std::string describe() const override;

 private:
  std::vector<double> support_;
  std::vector<double> cumulative_;
};

// Marginal defined by a sample: empirical CDF, strict-count left limit and
// the order-statistic quantile sorted[ceil(p m) - 1], with quantile(0) = min.
class EmpiricalMarginal final : public MarginalCdf {
 public:
  explicit EmpiricalMarginal(std::vector<double> samples);

  std::span<const double> sorted_samples() const { return sorted_; }
  double cdf(double y, FeatureView x) const override;
  double cdf_left(double y, FeatureView x) const override;
  double quantile(double p, FeatureView x) const override;
  double draw(FeatureView x, Rng& rng) const override;
  bool is_continuous() const override { return false; }
  std::string describe() const override;

 private:
  std::vector<double> sorted_;
};

// Marginal known only through its CDF; quantiles by bisection.
class CdfOnlyMarginal final : public MarginalCdf {
 public:
  using CdfFn = std::function<double(double, FeatureView)>;

  CdfOnlyMarginal(CdfFn cdf, double lower, double upper, std::string description);

  double cdf(double y, FeatureView x) const override { return cdf_(y, x); }
  double quantile(double p, FeatureView x) const override;
  std::string describe() const override { return description_; }

 private:
  CdfFn cdf_;
  double lower_;
  double upper_;
  std::string description_;
};

// Base forecast F(Y | x) with d marginals and a joint sampler.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;

  virtual std::size_t dim() const = 0;
  virtual const MarginalCdf& marginal(std::size_t l) const = 0;
  // m draws from the joint predictive at x, one per row.
  virtual RowMatrix joint_draw(FeatureView x, Rng& rng, std::size_t m) const = 0;
  virtual std::string describe() const = 0;

  std::string fingerprint() const;
};

// Product of independent marginals.
class IndependentModel final : public PredictiveModel {
 public:
  explicit IndependentModel(std::vector<std::shared_ptr<const MarginalCdf>> marginals);

  std::size_t dim() const override { return marginals_.size(); }
  const MarginalCdf& marginal(std::size_t l) const override;
  RowMatrix joint_draw(FeatureView x, Rng& rng, std::size_t m) const override;
  std::string describe() const override;

 private:
  std::vector<std::shared_ptr<const MarginalCdf>> marginals_;
};

// Unconditional model represented by a pool of joint draws (for example
// loaded from CSV). Marginals are empirical; joint draws resample rows.
class SampleModel final : public PredictiveModel {
 public:
  explicit SampleModel(RowMatrix draws);

  std::size_t dim() const override { return marginals_.size(); }
  const MarginalCdf& marginal(std::size_t l) const override;
  RowMatrix joint_draw(FeatureView x, Rng& rng, std::size_t m) const override;
  std::string describe() const override;
  const RowMatrix& draws() const { return draws_; }

 private:
  RowMatrix draws_;
  std::vector<EmpiricalMarginal> marginals_;
  std::string digest_;
};

// Empirical CDF #{s <= y} / m and its left variant #{s < y} / m.
double empirical_cdf(std::span<const double> samples, double y);
double empirical_cdf_left(std::span<const double> samples, double y);

// Order-statistic quantile of an unsorted sample.
double empirical_quantile(std::span<const double> samples, double p);

// Generalized inverse of a nondecreasing cdf on [lower, upper] by bisection
// (tolerance 1e-10, at most 200 iterations).
double bisection_quantile(const std::function<double(double)>& cdf, double p, double lower,
                          double upper);

// Clamps p into [eps, 1 - eps] and counts the clamp events.
struct ClampTally {
  std::size_t count = 0;
};
double clamp_probability(double p, double eps, ClampTally* tally = nullptr);

}  // namespace pitrecal

namespace pitrecal {

// Probabilities handed to an unbounded continuous quantile are kept inside
// [kQuantileClamp, 1 - kQuantileClamp]; discrete and empirical marginals
// resolve p = 0 or 1 to their extreme support points unclamped.
inline constexpr double kQuantileClamp = 1e-12;

double clamped_quantile(const MarginalCdf& marginal, double p, FeatureView x,
                        ClampTally* tally = nullptr);

}  // namespace pitrecal
