#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

// Probabilities are clamped into [eps, 1 - eps] before the normal quantile.
inline constexpr double kPitClamp = 1e-6;

// F(y- | x) + nu * (F(y | x) - F(y- | x)).
double randomized_pit(const MarginalCdf& marginal, FeatureView x, double y, double nu);

// Phi^{-1}(clamp(p)). Clamp events are added to tally when given.
double normalize_pit(double p, ClampTally* tally = nullptr);

// Marginal PIT values of a validation set under a base model.
struct PitMatrix {
  RowMatrix values;      // n_val x d, entries in [0, 1]
  RowMatrix normalized;  // Phi^{-1} of the clamped values
  std::uint64_t seed = 0;
  std::size_t clamp_count = 0;
  std::string model_fingerprint;
  std::string data_fingerprint;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

// Entry (i, l) uses the i-th row of validation and the l-th marginal; the
// randomization variates come from one stream seeded by `seed`, consumed in
// row-major order.
PitMatrix pit_matrix(const PredictiveModel& model, const Dataset& validation, std::uint64_t seed);

// Rebuilds a PitMatrix from stored PIT values (e.g. pit.csv).
PitMatrix pit_matrix_from_values(RowMatrix values, std::uint64_t seed,
                                 std::string model_fingerprint, std::string data_fingerprint);

void write_pit_csv(const std::string& path, const PitMatrix& pit);
void write_normalized_pit_csv(const std::string& path, const PitMatrix& pit);

}  // namespace pitrecal
