#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/flow/coupling.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal::flow {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 500;
  double holdout_fraction = 0.1;
  std::size_t patience = 20;
  // Held-out losses and the returned parameters use an exponential moving
  // average of the iterates with this per-step decay; 0 uses the raw iterates.
  double average_decay = 0.995;
  std::uint64_t seed = 0;
};

// Adam moments and early-stopping bookkeeping.
struct TrainState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::uint64_t step = 0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  double best_loss = 0.0;
  std::size_t patience = 20;
  std::size_t epochs_since_best = 0;
  Eigen::VectorXd average;  // bias-uncorrected moving average of the parameters
};

struct TrainResult {
  std::vector<double> train_loss;    // mean minibatch loss per epoch
  std::vector<double> holdout_loss;  // loss on the held-out split per epoch
  std::vector<double> best_loss;     // running minimum of holdout_loss
  double initial_loss = 0.0;         // holdout loss before the first update
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based; 0 when the initial parameters were never beaten
  bool early_stopped = false;
  std::size_t train_rows = 0;
  std::size_t holdout_rows = 0;

  double final_loss() const;
};

// Raised when a loss turns non-finite; carries the trace up to that point.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(const std::string& what, TrainResult trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const TrainResult& trace() const { return trace_; }

 private:
  TrainResult trace_;
};

// One Adam update of params with gradient grad.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, TrainState& state,
               const TrainConfig& config);

// Fits the flow to the normalized PIT rows of `pit`, conditioned on the
// aligned feature rows. The held-out split is the first fraction of a seeded
// permutation; conditioning standardization uses the training split only. The
// parameters with the lowest held-out loss are kept.
TrainResult train_flow(CouplingFlow& flow, const PitMatrix& pit, const RowMatrix& features,
                       const TrainConfig& config);

// n recalibrated draws at x: z ~ N(0, I), p = T(z | x), y_l = F_l^{-1}(Phi(p_l) | x).
// The flow must carry the fingerprint of `model`.
RowMatrix sample_recalibrated(const CouplingFlow& flow, const PredictiveModel& model,
                              FeatureView x, std::size_t n, Rng& rng,
                              ClampTally* tally = nullptr);

}  // namespace pitrecal::flow
