#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

// Smallest sample size coppit() accepts from a model by default.
inline constexpr std::size_t kMinKendallSample = 100;

// Empirical Kendall distribution: pseudo-observations w_k, sorted ascending.
struct KendallSample {
  std::vector<double> w;
  std::size_t m = 0;

  // #{w_k <= omega} / m.
  double cdf(double omega) const;
};

// For every row k, #{j : y_j <= y_k componentwise}, counting j = k.
// d = 1 sorts, d = 2 uses a sweep with a Fenwick tree, d >= 3 counts pairs.
std::vector<std::size_t> dominance_counts(const RowMatrix& samples);

// Throws DomainError("insufficient sample") when m < 2.
KendallSample pseudo_observations(const RowMatrix& samples);

double kendall_cdf(const KendallSample& ks, double omega);

struct DominanceCount {
  std::size_t weak = 0;    // #{y_j <= y} in all coordinates
  std::size_t strict = 0;  // #{y_j < y} in all coordinates
};
DominanceCount count_dominated(const RowMatrix& samples, FeatureView y);

struct CoppitResult {
  double u = 0.0;
  double v_left = 0.0;
  double v_right = 0.0;
  double upsilon = 0.0;
  double joint_cdf = 0.0;  // weak dominance fraction, the estimate of F(y | x)
};

// CopPIT of y against a joint sample from the forecast at the same x.
CoppitResult coppit_from_sample(const RowMatrix& sample, const KendallSample& ks, FeatureView y,
                                double upsilon);
CoppitResult coppit_from_sample(const RowMatrix& sample, FeatureView y, double upsilon);

// Draws m joint samples from the model at x and evaluates the CopPIT of y.
CoppitResult coppit(const PredictiveModel& model, FeatureView x, FeatureView y, std::size_t m,
                    Rng& rng, std::size_t min_m = kMinKendallSample);

struct KendallDiagramPoint {
  double omega = 0.0;
  double lhs = 0.0;  // fraction of observations with F(y | x) <= omega
  double rhs = 0.0;  // average Kendall CDF at omega
};

// Evenly spaced grid 0, 1/(points-1), ..., 1.
std::vector<double> omega_grid(std::size_t points);

// Running sums for a Kendall diagram, fed one observation at a time.
class KendallDiagramBuilder {
 public:
  explicit KendallDiagramBuilder(std::vector<double> grid);
  void add(double joint_cdf, const KendallSample& ks);
  std::vector<KendallDiagramPoint> finish() const;

 private:
  std::vector<double> grid_;
  std::vector<double> lhs_;
  std::vector<double> rhs_;
  std::size_t n_ = 0;
};

// Observation i uses substream (seed, "kendall", i).
std::vector<KendallDiagramPoint> kendall_diagram(const PredictiveModel& model,
                                                 const Dataset& validation,
                                                 std::span<const double> grid, std::size_t m,
                                                 std::uint64_t seed);

double max_kendall_gap(std::span<const KendallDiagramPoint> diagram);

}  // namespace pitrecal
