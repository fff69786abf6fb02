#include "pitrecal/pit.hpp"

#include <algorithm>

#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/core/normal.hpp"
#include "pitrecal/core/rng.hpp"

namespace pitrecal {

double randomized_pit(const MarginalCdf& marginal, FeatureView x, double y, double nu) {
  if (!(nu >= 0.0 && nu <= 1.0)) throw DomainError("randomized_pit: nu outside [0, 1]");
  const double upper = marginal.cdf(y, x);
  if (marginal.is_continuous()) return upper;
  const double lower = marginal.cdf_left(y, x);
  return std::clamp(lower + nu * (upper - lower), 0.0, 1.0);
}

double normalize_pit(double p, ClampTally* tally) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("normalize_pit: probability outside [0, 1]");
  return normal_quantile(clamp_probability(p, kPitClamp, tally));
}

PitMatrix pit_matrix(const PredictiveModel& model, const Dataset& validation, std::uint64_t seed) {
  if (validation.size() == 0) throw ConfigError("pit_matrix: empty validation set");
  if (validation.response_dim() != model.dim()) {
    throw ConfigError("pit_matrix: model dimension " + std::to_string(model.dim()) +
                      " does not match response dimension " +
                      std::to_string(validation.response_dim()));
  }
  const auto n = static_cast<Eigen::Index>(validation.size());
  const auto d = static_cast<Eigen::Index>(model.dim());
  PitMatrix pit;
  pit.values.resize(n, d);
  pit.normalized.resize(n, d);
  pit.seed = seed;
  pit.model_fingerprint = model.fingerprint();
  pit.data_fingerprint = validation.fingerprint();

  Rng rng = Rng::derive(seed, "pit");
  ClampTally tally;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = validation.features(static_cast<std::size_t>(i));
    for (Eigen::Index l = 0; l < d; ++l) {
      const double nu = rng.uniform();
      const double p =
          randomized_pit(model.marginal(static_cast<std::size_t>(l)), x, validation.y(i, l), nu);
      pit.values(i, l) = p;
      pit.normalized(i, l) = normalize_pit(p, &tally);
    }
  }
  pit.clamp_count = tally.count;
  return pit;
}

PitMatrix pit_matrix_from_values(RowMatrix values, std::uint64_t seed,
                                 std::string model_fingerprint, std::string data_fingerprint) {
  PitMatrix pit;
  pit.values = std::move(values);
  pit.normalized.resize(pit.values.rows(), pit.values.cols());
  ClampTally tally;
  for (Eigen::Index i = 0; i < pit.values.rows(); ++i) {
    for (Eigen::Index l = 0; l < pit.values.cols(); ++l) {
      pit.normalized(i, l) = normalize_pit(pit.values(i, l), &tally);
    }
  }
  pit.seed = seed;
  pit.clamp_count = tally.count;
  pit.model_fingerprint = std::move(model_fingerprint);
  pit.data_fingerprint = std::move(data_fingerprint);
  return pit;
}

void write_pit_csv(const std::string& path, const PitMatrix& pit) {
  write_csv(path, numbered_columns("p", pit.dim()), pit.values);
}

void write_normalized_pit_csv(const std::string& path, const PitMatrix& pit) {
  write_csv(path, numbered_columns("p", pit.dim()), pit.normalized);
}

}  // namespace pitrecal
