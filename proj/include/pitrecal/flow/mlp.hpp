#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "pitrecal/core/rng.hpp"

namespace pitrecal::flow {

// Elementwise tanh; the conditioners' hidden nonlinearity.
void tanh_inplace(Eigen::MatrixXd& m);

// Fully connected tanh network whose weights live in a slice of an external
// parameter vector. Batches are column-major: one sample per column.
class Mlp {
 public:
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // [0] = input, then hidden outputs
  };

  Mlp() = default;
  Mlp(std::size_t in, std::size_t out, std::size_t hidden, std::size_t hidden_layers,
      std::size_t offset);

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t offset() const { return offset_; }
  std::size_t parameter_count() const { return count_; }

  // Glorot-uniform hidden weights, zero biases; the output layer is zeroed
  // when zero_output is set.
  void initialize(Eigen::VectorXd& theta, Rng& rng, bool zero_output) const;

  Eigen::MatrixXd forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& input,
                          Cache* cache = nullptr) const;

  // Accumulates parameter gradients into grad and returns d loss / d input.
  Eigen::MatrixXd backward(const Eigen::VectorXd& theta, const Cache& cache,
                           const Eigen::MatrixXd& grad_output, Eigen::VectorXd& grad) const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  std::size_t offset_ = 0;
  std::size_t count_ = 0;
};

}  // namespace pitrecal::flow
