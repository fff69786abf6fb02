#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pitrecal/core/matrix.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/flow/mlp.hpp"

namespace pitrecal::flow {

struct FlowArchitecture {
  std::size_t layers = 6;
  std::size_t hidden = 32;
  std::size_t hidden_layers = 2;
  double scale_bound = 3.0;  // |log-scale| per layer stays below this
};

// Affine coupling layer. Coordinates with mask 1 pass through and, together
// with the conditioning features, feed the scale and shift networks; the
// remaining coordinates are transformed as
//   y = z * exp(s) + t,  s = B tanh(raw / B).
class CouplingLayer {
 public:
  struct Cache {
    Mlp::Cache scale_net;
    Mlp::Cache shift_net;
    Eigen::MatrixXd squashed;  // tanh(raw / B)
    Eigen::MatrixXd neg_exp_s;  // exp(-s)
    Eigen::MatrixXd moved_out;  // transformed rows of the inverse output
  };

  CouplingLayer(std::vector<std::uint8_t> mask, std::size_t cond_dim,
                const FlowArchitecture& arch, std::size_t offset);

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  std::size_t parameter_count() const {
    return scale_net_.parameter_count() + shift_net_.parameter_count();
  }
  const Mlp& scale_net() const { return scale_net_; }
  const Mlp& shift_net() const { return shift_net_; }

  void initialize(Eigen::VectorXd& theta, Rng& rng) const;

  // z -> y; adds the per-sample log|det J| to logdet.
  void forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& z,
               const Eigen::MatrixXd& cond, Eigen::MatrixXd& y, Eigen::VectorXd& logdet) const;

  // y -> z; adds the per-sample log|det J| of the inverse to logdet.
  void inverse(const Eigen::VectorXd& theta, const Eigen::MatrixXd& y,
               const Eigen::MatrixXd& cond, Eigen::MatrixXd& z, Eigen::VectorXd& logdet,
               Cache* cache = nullptr) const;

  // Backward through inverse(): takes d loss / d z and the weight of this
  // layer's sum of log-scales in the loss; returns d loss / d y.
  Eigen::MatrixXd inverse_backward(const Eigen::VectorXd& theta, const Cache& cache,
                                   const Eigen::MatrixXd& grad_z, double logscale_weight,
                                   Eigen::VectorXd& grad) const;

 private:
  Eigen::MatrixXd net_input(const Eigen::MatrixXd& v, const Eigen::MatrixXd& cond) const;

  std::vector<std::uint8_t> mask_;
  std::vector<Eigen::Index> kept_;
  std::vector<Eigen::Index> moved_;
  std::size_t cond_dim_;
  double bound_;
  Mlp scale_net_;
  Mlp shift_net_;
};

// Conditional flow T(z | x) from N(0, I_d) to normalized PIT vectors.
class CouplingFlow {
 public:
  CouplingFlow(std::size_t dim, std::vector<std::size_t> conditioning_columns,
               FlowArchitecture arch = {}, std::uint64_t init_seed = 0);

  std::size_t dim() const { return dim_; }
  std::size_t conditioning_dim() const { return columns_.size(); }
  const std::vector<std::size_t>& conditioning_columns() const { return columns_; }
  const FlowArchitecture& architecture() const { return arch_; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(theta_.size()); }

  // Conditioning features are (x[columns] - center) / scale.
  void set_standardization(std::vector<double> center, std::vector<double> scale);
  const std::vector<double>& center() const { return center_; }
  const std::vector<double>& scale() const { return scale_; }
  void conditioning(FeatureView x, Eigen::Ref<Eigen::VectorXd> out) const;
  Eigen::MatrixXd conditioning_batch(const RowMatrix& features) const;

  // Provenance of the PIT data the flow was fitted to.
  void set_provenance(std::string model_fingerprint, std::string data_fingerprint,
                      std::uint64_t pit_seed);
  const std::string& model_fingerprint() const { return model_fingerprint_; }
  const std::string& data_fingerprint() const { return data_fingerprint_; }
  std::uint64_t pit_seed() const { return pit_seed_; }

  // Batch maps on standardized conditioning, one sample per column. A
  // non-finite intermediate raises NumericalError naming the layer.
  void forward_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond, Eigen::MatrixXd& out,
                     Eigen::VectorXd& logdet) const;
  void inverse_batch(const Eigen::MatrixXd& p, const Eigen::MatrixXd& cond, Eigen::MatrixXd& out,
                     Eigen::VectorXd& logdet) const;
  Eigen::VectorXd log_density_batch(const Eigen::MatrixXd& p, const Eigen::MatrixXd& cond) const;

  // Mean negative log-density over the batch; gradient w.r.t. parameters()
  // when grad is non-null.
  double mean_nll(const Eigen::MatrixXd& p, const Eigen::MatrixXd& cond,
                  Eigen::VectorXd* grad = nullptr) const;

 private:
  std::size_t dim_;
  std::vector<std::size_t> columns_;
  FlowArchitecture arch_;
  std::vector<CouplingLayer> layers_;
  Eigen::VectorXd theta_;
  std::vector<double> center_;
  std::vector<double> scale_;
  std::string model_fingerprint_;
  std::string data_fingerprint_;
  std::uint64_t pit_seed_ = 0;
};

// Alternating checkerboard masks; with d = 1 every layer transforms the
// single coordinate conditioned on x alone.
std::vector<std::uint8_t> coupling_mask(std::size_t dim, std::size_t layer);

struct FlowPoint {
  std::vector<double> value;
  double logdet = 0.0;
};

// Single-point maps on raw features x.
FlowPoint flow_forward(const CouplingFlow& flow, FeatureView z, FeatureView x);
FlowPoint flow_inverse(const CouplingFlow& flow, FeatureView p, FeatureView x);
double flow_logdensity(const CouplingFlow& flow, FeatureView p, FeatureView x);

}  // namespace pitrecal::flow
