#include "pitrecal/flow/coupling.hpp"

#include <cmath>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/normal.hpp"

namespace pitrecal::flow {

std::vector<std::uint8_t> coupling_mask(std::size_t dim, std::size_t layer) {
  std::vector<std::uint8_t> mask(dim, 0);
  if (dim == 1) return mask;
  for (std::size_t j = 0; j < dim; ++j) mask[j] = ((j + layer) % 2 == 0) ? 1 : 0;
  return mask;
}

CouplingLayer::CouplingLayer(std::vector<std::uint8_t> mask, std::size_t cond_dim,
                             const FlowArchitecture& arch, std::size_t offset)
    : mask_(std::move(mask)), cond_dim_(cond_dim), bound_(arch.scale_bound) {
  for (std::size_t j = 0; j < mask_.size(); ++j) {
    (mask_[j] ? kept_ : moved_).push_back(static_cast<Eigen::Index>(j));
  }
  if (moved_.empty()) throw ConfigError("coupling layer: mask leaves nothing to transform");
  const std::size_t in = kept_.size() + cond_dim_;
  scale_net_ = Mlp(in, moved_.size(), arch.hidden, arch.hidden_layers, offset);
  shift_net_ = Mlp(in, moved_.size(), arch.hidden, arch.hidden_layers,
                   offset + scale_net_.parameter_count());
}

void CouplingLayer::initialize(Eigen::VectorXd& theta, Rng& rng) const {
  scale_net_.initialize(theta, rng, true);
  shift_net_.initialize(theta, rng, true);
}

Eigen::MatrixXd CouplingLayer::net_input(const Eigen::MatrixXd& v,
                                         const Eigen::MatrixXd& cond) const {
  Eigen::MatrixXd input(static_cast<Eigen::Index>(kept_.size() + cond_dim_), v.cols());
  if (!kept_.empty()) input.topRows(static_cast<Eigen::Index>(kept_.size())) = v(kept_, Eigen::all);
  if (cond_dim_ > 0) input.bottomRows(static_cast<Eigen::Index>(cond_dim_)) = cond;
  return input;
}

void CouplingLayer::forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& z,
                            const Eigen::MatrixXd& cond, Eigen::MatrixXd& y,
                            Eigen::VectorXd& logdet) const {
  const Eigen::MatrixXd input = net_input(z, cond);
  Eigen::MatrixXd squashed = scale_net_.forward(theta, input) / bound_;
  tanh_inplace(squashed);
  const Eigen::MatrixXd s = bound_ * squashed;
  const Eigen::MatrixXd t = shift_net_.forward(theta, input);
  y = z;
  y(moved_, Eigen::all) = z(moved_, Eigen::all).array() * s.array().exp() + t.array();
  logdet += s.colwise().sum().transpose();
}

void CouplingLayer::inverse(const Eigen::VectorXd& theta, const Eigen::MatrixXd& y,
                            const Eigen::MatrixXd& cond, Eigen::MatrixXd& z,
                            Eigen::VectorXd& logdet, Cache* cache) const {
  const Eigen::MatrixXd input = net_input(y, cond);
  Eigen::MatrixXd squashed =
      scale_net_.forward(theta, input, cache ? &cache->scale_net : nullptr) / bound_;
  tanh_inplace(squashed);
  const Eigen::MatrixXd s = bound_ * squashed;
  const Eigen::MatrixXd t = shift_net_.forward(theta, input, cache ? &cache->shift_net : nullptr);
  const Eigen::MatrixXd neg_exp = (-s).array().exp();
  z = y;
  z(moved_, Eigen::all) = (y(moved_, Eigen::all) - t).array() * neg_exp.array();
  logdet -= s.colwise().sum().transpose();
  if (cache) {
    cache->squashed = std::move(squashed);
    cache->neg_exp_s = neg_exp;
    cache->moved_out = z(moved_, Eigen::all);
  }
}

Eigen::MatrixXd CouplingLayer::inverse_backward(const Eigen::VectorXd& theta, const Cache& cache,
                                                const Eigen::MatrixXd& grad_z,
                                                double logscale_weight,
                                                Eigen::VectorXd& grad) const {
  const Eigen::MatrixXd g_moved = grad_z(moved_, Eigen::all);
  Eigen::MatrixXd grad_y = grad_z;
  grad_y(moved_, Eigen::all) = g_moved.array() * cache.neg_exp_s.array();

  const Eigen::MatrixXd d_shift = -(g_moved.array() * cache.neg_exp_s.array()).matrix();
  // d loss / d s, then through s = B tanh(raw / B).
  const Eigen::MatrixXd d_s = (-(g_moved.array() * cache.moved_out.array()) + logscale_weight).matrix();
  const Eigen::MatrixXd d_raw = (d_s.array() * (1.0 - cache.squashed.array().square())).matrix();

  const Eigen::MatrixXd in_s = scale_net_.backward(theta, cache.scale_net, d_raw, grad);
  const Eigen::MatrixXd in_t = shift_net_.backward(theta, cache.shift_net, d_shift, grad);
  if (!kept_.empty()) {
    const auto k = static_cast<Eigen::Index>(kept_.size());
    grad_y(kept_, Eigen::all) += in_s.topRows(k) + in_t.topRows(k);
  }
  return grad_y;
}

CouplingFlow::CouplingFlow(std::size_t dim, std::vector<std::size_t> conditioning_columns,
                           FlowArchitecture arch, std::uint64_t init_seed)
    : dim_(dim), columns_(std::move(conditioning_columns)), arch_(arch) {
  if (dim_ == 0) throw ConfigError("flow: dimension must be positive");
  if (arch_.layers == 0) throw ConfigError("flow: at least one coupling layer required");
  if (!(arch_.scale_bound > 0.0)) throw ConfigError("flow: scale bound must be positive");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch_.layers; ++l) {
    layers_.emplace_back(coupling_mask(dim_, l), columns_.size(), arch_, offset);
    offset += layers_.back().parameter_count();
  }
  theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset));
  Rng rng = Rng::derive(init_seed, "flow-init");
  for (const auto& layer : layers_) layer.initialize(theta_, rng);
  center_.assign(columns_.size(), 0.0);
  scale_.assign(columns_.size(), 1.0);
}

void CouplingFlow::set_standardization(std::vector<double> center, std::vector<double> scale) {
  if (center.size() != columns_.size() || scale.size() != columns_.size()) {
    throw ConfigError("flow: standardization size does not match conditioning columns");
  }
  for (double s : scale) {
    if (!(s > 0.0)) throw ConfigError("flow: standardization scale must be positive");
  }
  center_ = std::move(center);
  scale_ = std::move(scale);
}

void CouplingFlow::conditioning(FeatureView x, Eigen::Ref<Eigen::VectorXd> out) const {
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    if (columns_[j] >= x.size()) throw ConfigError("flow: feature vector lacks a conditioning column");
    out[static_cast<Eigen::Index>(j)] = (x[columns_[j]] - center_[j]) / scale_[j];
  }
}

Eigen::MatrixXd CouplingFlow::conditioning_batch(const RowMatrix& features) const {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(columns_.size()), features.rows());
  for (Eigen::Index i = 0; i < features.rows(); ++i) conditioning(row_view(features, i), c.col(i));
  return c;
}

void CouplingFlow::set_provenance(std::string model_fingerprint, std::string data_fingerprint,
                                  std::uint64_t pit_seed) {
  model_fingerprint_ = std::move(model_fingerprint);
  data_fingerprint_ = std::move(data_fingerprint);
  pit_seed_ = pit_seed;
}

namespace {

void check_finite(const Eigen::MatrixXd& m, std::size_t layer, const char* direction) {
  if (!m.allFinite()) {
    throw NumericalError(std::string("flow ") + direction + ": non-finite value after coupling layer " +
                         std::to_string(layer));
  }
}

}  // namespace

void CouplingFlow::forward_batch(const Eigen::MatrixXd& z, const Eigen::MatrixXd& cond,
                                 Eigen::MatrixXd& out, Eigen::VectorXd& logdet) const {
  logdet = Eigen::VectorXd::Zero(z.cols());
  Eigen::MatrixXd cur = z;
  Eigen::MatrixXd next;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].forward(theta_, cur, cond, next, logdet);
    check_finite(next, l, "forward");
    cur.swap(next);
  }
  out = std::move(cur);
}

void CouplingFlow::inverse_batch(const Eigen::MatrixXd& p, const Eigen::MatrixXd& cond,
                                 Eigen::MatrixXd& out, Eigen::VectorXd& logdet) const {
  logdet = Eigen::VectorXd::Zero(p.cols());
  Eigen::MatrixXd cur = p;
  Eigen::MatrixXd next;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    layers_[l].inverse(theta_, cur, cond, next, logdet);
    check_finite(next, l, "inverse");
    cur.swap(next);
  }
  out = std::move(cur);
}

Eigen::VectorXd CouplingFlow::log_density_batch(const Eigen::MatrixXd& p,
                                                const Eigen::MatrixXd& cond) const {
  Eigen::MatrixXd z;
  Eigen::VectorXd logdet;
  inverse_batch(p, cond, z, logdet);
  const double base = -0.5 * static_cast<double>(dim_) * kLogTwoPi;
  return (base - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose() + logdet;
}

double CouplingFlow::mean_nll(const Eigen::MatrixXd& p, const Eigen::MatrixXd& cond,
                              Eigen::VectorXd* grad) const {
  const auto batch = static_cast<double>(p.cols());
  if (!grad) return -log_density_batch(p, cond).mean();

  std::vector<CouplingLayer::Cache> caches(layers_.size());
  Eigen::VectorXd logdet = Eigen::VectorXd::Zero(p.cols());
  Eigen::MatrixXd cur = p;
  Eigen::MatrixXd next;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    layers_[l].inverse(theta_, cur, cond, next, logdet, &caches[l]);
    check_finite(next, l, "inverse");
    cur.swap(next);
  }
  const double base = 0.5 * static_cast<double>(dim_) * kLogTwoPi;
  const double nll = base + (0.5 * cur.colwise().squaredNorm().sum() - logdet.sum()) / batch;

  grad->setZero(theta_.size());
  Eigen::MatrixXd g = cur / batch;  // d nll / d z
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    g = layers_[l].inverse_backward(theta_, caches[l], g, 1.0 / batch, *grad);
  }
  return nll;
}

namespace {

Eigen::MatrixXd column(FeatureView v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t j = 0; j < v.size(); ++j) m(static_cast<Eigen::Index>(j), 0) = v[j];
  return m;
}

}  // namespace

FlowPoint flow_forward(const CouplingFlow& flow, FeatureView z, FeatureView x) {
  if (z.size() != flow.dim()) throw ConfigError("flow_forward: dimension mismatch");
  Eigen::MatrixXd cond(static_cast<Eigen::Index>(flow.conditioning_dim()), 1);
  flow.conditioning(x, cond.col(0));
  Eigen::MatrixXd out;
  Eigen::VectorXd logdet;
  flow.forward_batch(column(z), cond, out, logdet);
  return {std::vector<double>(out.data(), out.data() + out.size()), logdet[0]};
}

FlowPoint flow_inverse(const CouplingFlow& flow, FeatureView p, FeatureView x) {
  if (p.size() != flow.dim()) throw ConfigError("flow_inverse: dimension mismatch");
  Eigen::MatrixXd cond(static_cast<Eigen::Index>(flow.conditioning_dim()), 1);
  flow.conditioning(x, cond.col(0));
  Eigen::MatrixXd out;
  Eigen::VectorXd logdet;
  flow.inverse_batch(column(p), cond, out, logdet);
  return {std::vector<double>(out.data(), out.data() + out.size()), logdet[0]};
}

double flow_logdensity(const CouplingFlow& flow, FeatureView p, FeatureView x) {
  if (p.size() != flow.dim()) throw ConfigError("flow_logdensity: dimension mismatch");
  Eigen::MatrixXd cond(static_cast<Eigen::Index>(flow.conditioning_dim()), 1);
  flow.conditioning(x, cond.col(0));
  return flow.log_density_batch(column(p), cond)[0];
}

}  // namespace pitrecal::flow
