#include "pitrecal/flow/mlp.hpp"

#include <cmath>

namespace pitrecal::flow {

void tanh_inplace(Eigen::MatrixXd& m) {
  // 1 - 2 / (exp(2x) + 1): Eigen vectorizes exp for doubles but not tanh.
  m = 1.0 - 2.0 / ((2.0 * m.array()).exp() + 1.0);
}

Mlp::Mlp(std::size_t in, std::size_t out, std::size_t hidden, std::size_t hidden_layers,
         std::size_t offset)
    : offset_(offset) {
  sizes_.push_back(in);
  for (std::size_t h = 0; h < hidden_layers; ++h) sizes_.push_back(hidden);
  sizes_.push_back(out);
  std::size_t pos = offset;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weight_offset_.push_back(pos);
    pos += sizes_[l + 1] * sizes_[l];
    bias_offset_.push_back(pos);
    pos += sizes_[l + 1];
  }
  count_ = pos - offset;
}

void Mlp::initialize(Eigen::VectorXd& theta, Rng& rng, bool zero_output) const {
  const std::size_t last = sizes_.size() - 2;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l];
    const std::size_t fan_out = sizes_[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) {
      const double w = (l == last && zero_output) ? 0.0 : limit * (2.0 * rng.uniform() - 1.0);
      theta[static_cast<Eigen::Index>(weight_offset_[l] + i)] = w;
    }
    for (std::size_t i = 0; i < fan_out; ++i) {
      theta[static_cast<Eigen::Index>(bias_offset_[l] + i)] = 0.0;
    }
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& input,
                             Cache* cache) const {
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(input);
  }
  Eigen::MatrixXd a;
  const Eigen::MatrixXd* prev = &input;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(sizes_[l]);
    Eigen::Map<const Eigen::MatrixXd> w(theta.data() + weight_offset_[l], rows, cols);
    Eigen::Map<const Eigen::VectorXd> b(theta.data() + bias_offset_[l], rows);
    Eigen::MatrixXd z(rows, prev->cols());
    z.colwise() = b;
    // Eigen's blocked product is slow for a very short inner dimension.
    if (cols <= 4) {
      z.noalias() += w.lazyProduct(*prev);
    } else {
      z.noalias() += w * *prev;
    }
    if (l + 1 < layers) {
      tanh_inplace(z);
      if (cache) cache->activations.push_back(z);
    }
    a = std::move(z);
    prev = &a;
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Eigen::VectorXd& theta, const Cache& cache,
                              const Eigen::MatrixXd& grad_output, Eigen::VectorXd& grad) const {
  Eigen::MatrixXd delta = grad_output;
  for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
    const auto rows = static_cast<Eigen::Index>(sizes_[l + 1]);
    const auto cols = static_cast<Eigen::Index>(sizes_[l]);
    Eigen::Map<const Eigen::MatrixXd> w(theta.data() + weight_offset_[l], rows, cols);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_offset_[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset_[l], rows);
    const Eigen::MatrixXd& a_in = cache.activations[l];
    gw.noalias() += delta * a_in.transpose();
    gb += delta.rowwise().sum();
    Eigen::MatrixXd back = w.transpose() * delta;
    if (l == 0) return back;
    delta = back.array() * (1.0 - a_in.array().square());
  }
  return delta;  // unreachable: the network has at least one layer
}

}  // namespace pitrecal::flow
