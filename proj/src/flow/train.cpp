#include "pitrecal/flow/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pitrecal/core/normal.hpp"

namespace pitrecal::flow {

double TrainResult::final_loss() const {
  if (best_epoch == 0 || best_loss.empty()) return initial_loss;
  return best_loss.back();
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, TrainState& state,
               const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    state.m = Eigen::VectorXd::Zero(params.size());
    state.v = Eigen::VectorXd::Zero(params.size());
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  params.array() -= state.learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.epsilon);
}

namespace {

void validate(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("flow training: learning rate must be positive");
  if (config.batch_size == 0) throw ConfigError("flow training: batch size must be positive");
  if (config.max_epochs == 0) throw ConfigError("flow training: max_epochs must be positive");
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
    throw ConfigError("flow training: holdout fraction must lie in [0, 1)");
  }
  if (!(config.average_decay >= 0.0 && config.average_decay < 1.0)) {
    throw ConfigError("flow training: average decay must lie in [0, 1)");
  }
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw ConfigError("flow training: Adam betas must lie in [0, 1)");
  }
}

Eigen::MatrixXd gather_columns(const RowMatrix& rows, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(rows.cols(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = rows.row(static_cast<Eigen::Index>(idx[c])).transpose();
  }
  return out;
}

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& cols, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(cols.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) = cols.col(static_cast<Eigen::Index>(idx[c]));
  }
  return out;
}

}  // namespace

TrainResult train_flow(CouplingFlow& flow, const PitMatrix& pit, const RowMatrix& features,
                       const TrainConfig& config) {
  validate(config);
  const std::size_t n = pit.size();
  if (n == 0) throw ConfigError("flow training: empty PIT matrix");
  if (pit.dim() != flow.dim()) throw ConfigError("flow training: PIT dimension does not match flow");
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw ConfigError("flow training: conditioning rows do not align with PIT rows");
  }
  if (!pit.normalized.allFinite()) throw NumericalError("flow training: normalized PIT is not finite");
  for (std::size_t c : flow.conditioning_columns()) {
    if (c >= static_cast<std::size_t>(features.cols())) {
      throw ConfigError("flow training: conditioning column out of range");
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = Rng::derive(config.seed, "flow-split");
  split_rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_hold = static_cast<std::size_t>(std::floor(config.holdout_fraction * static_cast<double>(n)));
  if (n_hold >= n) n_hold = 0;
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());

  // Standardization from the training split (sample standard deviation).
  const auto& cols = flow.conditioning_columns();
  std::vector<double> center(cols.size(), 0.0), scale(cols.size(), 1.0);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto c = static_cast<Eigen::Index>(cols[j]);
    double mean = 0.0;
    for (std::size_t i : train) mean += features(static_cast<Eigen::Index>(i), c);
    mean /= static_cast<double>(train.size());
    double ss = 0.0;
    for (std::size_t i : train) {
      const double dlt = features(static_cast<Eigen::Index>(i), c) - mean;
      ss += dlt * dlt;
    }
    const double sd = train.size() > 1 ? std::sqrt(ss / static_cast<double>(train.size() - 1)) : 0.0;
    center[j] = mean;
    scale[j] = sd > 0.0 && std::isfinite(sd) ? sd : 1.0;
  }
  flow.set_standardization(center, scale);
  flow.set_provenance(pit.model_fingerprint, pit.data_fingerprint, pit.seed);

  const Eigen::MatrixXd cond_all = flow.conditioning_batch(features);
  const Eigen::MatrixXd p_train = gather_columns(pit.normalized, train);
  const Eigen::MatrixXd c_train = gather_columns(cond_all, train);
  const Eigen::MatrixXd p_hold = n_hold ? gather_columns(pit.normalized, hold) : p_train;
  const Eigen::MatrixXd c_hold = n_hold ? gather_columns(cond_all, hold) : c_train;

  TrainResult result;
  result.train_rows = train.size();
  result.holdout_rows = n_hold;
  result.initial_loss = flow.mean_nll(p_hold, c_hold);
  if (!std::isfinite(result.initial_loss)) {
    throw TrainingDiverged("flow training: initial loss is not finite", result);
  }

  TrainState state;
  state.learning_rate = config.learning_rate;
  state.batch_size = config.batch_size;
  state.patience = config.patience;
  state.best_loss = result.initial_loss;
  Eigen::VectorXd best_params = flow.parameters();

  Rng batch_rng = Rng::derive(config.seed, "flow-batches");
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Eigen::VectorXd grad(static_cast<Eigen::Index>(flow.parameter_count()));

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    batch_rng.shuffle(std::span<std::size_t>(perm));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += config.batch_size) {
      const std::size_t stop = std::min(perm.size(), start + config.batch_size);
      std::span<const std::size_t> idx(perm.data() + start, stop - start);
      const Eigen::MatrixXd pb = gather_columns(p_train, idx);
      const Eigen::MatrixXd cb = gather_columns(c_train, idx);
      double loss = 0.0;
      try {
        loss = flow.mean_nll(pb, cb, &grad);
      } catch (const NumericalError& e) {
        throw TrainingDiverged(std::string("flow training diverged in epoch ") +
                                   std::to_string(epoch) + ": " + e.what(),
                               result);
      }
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingDiverged("flow training diverged in epoch " + std::to_string(epoch), result);
      }
      loss_sum += loss * static_cast<double>(stop - start);
      adam_step(flow.parameters(), grad, state, config);
      if (config.average_decay > 0.0) {
        if (state.average.size() == 0) state.average = Eigen::VectorXd::Zero(grad.size());
        state.average = config.average_decay * state.average + (1.0 - config.average_decay) * flow.parameters();
      }
    }
    const double train_loss = loss_sum / static_cast<double>(perm.size());
    // Evaluate (and keep) the averaged parameters in place of the iterate.
    Eigen::VectorXd iterate;
    if (config.average_decay > 0.0) {
      iterate = flow.parameters();
      flow.parameters() =
          state.average / (1.0 - std::pow(config.average_decay, static_cast<double>(state.step)));
    }
    double hold_loss = 0.0;
    try {
      hold_loss = flow.mean_nll(p_hold, c_hold);
    } catch (const NumericalError& e) {
      throw TrainingDiverged(std::string("flow training diverged in epoch ") + std::to_string(epoch) +
                                 ": " + e.what(),
                             result);
    }
    result.train_loss.push_back(train_loss);
    result.holdout_loss.push_back(hold_loss);
    result.epochs_run = epoch;
    if (!std::isfinite(hold_loss)) {
      throw TrainingDiverged("flow training diverged in epoch " + std::to_string(epoch), result);
    }
    if (hold_loss < state.best_loss) {
      state.best_loss = hold_loss;
      state.epochs_since_best = 0;
      result.best_epoch = epoch;
      best_params = flow.parameters();
    } else {
      ++state.epochs_since_best;
    }
    if (config.average_decay > 0.0) flow.parameters() = std::move(iterate);
    result.best_loss.push_back(state.best_loss);
    if (state.epochs_since_best >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }
  flow.parameters() = best_params;
  return result;
}

RowMatrix sample_recalibrated(const CouplingFlow& flow, const PredictiveModel& model,
                              FeatureView x, std::size_t n, Rng& rng, ClampTally* tally) {
  if (flow.model_fingerprint().empty() || flow.model_fingerprint() != model.fingerprint()) {
    throw ConfigError("flow sampling: flow was not trained against this base model");
  }
  if (flow.dim() != model.dim()) throw ConfigError("flow sampling: dimension mismatch");
  const std::size_t d = flow.dim();
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  Eigen::VectorXd cond_one(static_cast<Eigen::Index>(flow.conditioning_dim()));
  flow.conditioning(x, cond_one);

  constexpr std::size_t kChunk = 256;  // keeps temporaries small and cache resident
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(n, start + kChunk) - start;
    const auto cols = static_cast<Eigen::Index>(len);
    Eigen::MatrixXd z(static_cast<Eigen::Index>(d), cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(d); ++l) z(l, c) = rng.normal();
    }
    const Eigen::MatrixXd cond = cond_one.replicate(1, cols);
    Eigen::MatrixXd p;
    Eigen::VectorXd logdet;
    flow.forward_batch(z, cond, p, logdet);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto r = static_cast<Eigen::Index>(start) + c;
      for (std::size_t l = 0; l < d; ++l) {
        const double u = normal_cdf(p(static_cast<Eigen::Index>(l), c));
        out(r, static_cast<Eigen::Index>(l)) = clamped_quantile(model.marginal(l), u, x, tally);
      }
    }
  }
  return out;
}

}  // namespace pitrecal::flow
