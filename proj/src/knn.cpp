#include "pitrecal/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <utility>

#include "pitrecal/core/error.hpp"

namespace pitrecal {
namespace {

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)

double squared_distance(const double* a, FeatureView b) {
  double s = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

}  // namespace

FeatureMap FeatureMap::identity(std::size_t q) {
  std::vector<std::size_t> cols(q);
  std::iota(cols.begin(), cols.end(), 0);
  return select(std::move(cols));
}

FeatureMap FeatureMap::select(std::vector<std::size_t> columns) {
  FeatureMap m;
  m.columns_ = std::move(columns);
  m.center_.assign(m.columns_.size(), 0.0);
  m.scale_.assign(m.columns_.size(), 1.0);
  return m;
}

void FeatureMap::fit_standardization(const RowMatrix& features) {
  if (features.rows() < 2) throw ConfigError("feature standardization needs at least two rows");
  if (static_cast<std::size_t>(features.cols()) < input_dim_required()) {
    throw ConfigError("feature map selects a column beyond the feature dimension");
  }
  const double n = static_cast<double>(features.rows());
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    const auto col = features.col(static_cast<Eigen::Index>(columns_[j]));
    const double mean = col.sum() / n;
    const double var = (col.array() - mean).square().sum() / (n - 1.0);
    center_[j] = mean;
    scale_[j] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
}

std::size_t FeatureMap::input_dim_required() const {
  return columns_.empty() ? 0 : *std::max_element(columns_.begin(), columns_.end()) + 1;
}

void FeatureMap::apply(FeatureView x, std::span<double> out) const {
  if (x.size() < input_dim_required()) throw ConfigError("feature vector too short for feature map");
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    out[j] = (x[columns_[j]] - center_[j]) / scale_[j];
  }
}

std::vector<double> FeatureMap::apply(FeatureView x) const {
  std::vector<double> out(columns_.size());
  apply(x, out);
  return out;
}

RowMatrix FeatureMap::apply_rows(const RowMatrix& features) const {
  RowMatrix out(features.rows(), static_cast<Eigen::Index>(columns_.size()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    apply(row_view(features, i),
          std::span<double>(out.data() + i * out.cols(), static_cast<std::size_t>(out.cols())));
  }
  return out;
}

std::string FeatureMap::describe() const {
  std::string s = "h[";
  for (std::size_t j = 0; j < columns_.size(); ++j) {
    s += (j ? "," : "") + std::to_string(columns_[j]);
  }
  return s + "]";
}

KdTree::KdTree(RowMatrix points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  index_.resize(size());
  std::iota(index_.begin(), index_.end(), 0);
  if (!index_.empty()) build(0, index_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= leaf_size_) return id;

  // Split on the axis of widest spread.
  int axis = 0;
  double widest = -1.0;
  for (Eigen::Index a = 0; a < points_.cols(); ++a) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_(static_cast<Eigen::Index>(index_[i]), a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = static_cast<int>(a);
    }
  }
  if (widest <= 0.0) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + static_cast<std::ptrdiff_t>(begin),
                   index_.begin() + static_cast<std::ptrdiff_t>(mid),
                   index_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     return points_(static_cast<Eigen::Index>(a), axis) <
                            points_(static_cast<Eigen::Index>(b), axis);
                   });
  const double split = points_(static_cast<Eigen::Index>(index_[mid]), axis);
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::size_t> KdTree::nearest(FeatureView query, std::size_t k) const {
  if (k == 0 || k > size()) throw ConfigError("KdTree: k must lie in [1, n]");
  if (query.size() != static_cast<std::size_t>(points_.cols())) {
    throw ConfigError("KdTree: query dimension mismatch");
  }
  std::priority_queue<Candidate> heap;  // worst candidate on top

  auto consider = [&](std::size_t idx) {
    const Candidate c{squared_distance(points_.data() + idx * static_cast<std::size_t>(points_.cols()), query), idx};
    if (heap.size() < k) {
      heap.push(c);
    } else if (c < heap.top()) {
      heap.pop();
      heap.push(c);
    }
  };

  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) consider(index_[i]);
      return;
    }
    const double diff = query[static_cast<std::size_t>(node.axis)] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    // <= keeps subtrees that may hold an equal-distance, smaller-index point.
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  visit(visit, 0);

  std::vector<std::size_t> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top().second;
    heap.pop();
  }
  return out;
}

std::vector<std::size_t> linear_scan_nearest(const RowMatrix& points, FeatureView query,
                                             std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k > n) throw ConfigError("linear scan: k must lie in [1, n]");
  std::vector<Candidate> all(n);
  for (std::size_t i = 0; i < n; ++i) {
    all[i] = {squared_distance(points.data() + i * static_cast<std::size_t>(points.cols()), query), i};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = all[i].second;
  return out;
}

NeighborIndex NeighborIndex::euclidean(const Dataset& validation, FeatureMap map) {
  if (validation.size() == 0) throw ConfigError("neighbour index: empty validation set");
  NeighborIndex idx;
  idx.strategy_ = NeighborStrategy::Euclidean;
  idx.n_ = validation.size();
  idx.data_fingerprint_ = validation.fingerprint();
  idx.map_ = std::move(map);
  idx.mapped_ = idx.map_.apply_rows(validation.x);
  if (idx.map_.output_dim() <= kKdTreeMaxDim) {
    idx.tree_ = std::make_shared<const KdTree>(idx.mapped_);
  }
  return idx;
}

NeighborIndex NeighborIndex::rolling(const Dataset& validation, std::vector<double> times) {
  if (times.size() != validation.size()) {
    throw ConfigError("rolling index: one time stamp per validation row required");
  }
  if (!std::is_sorted(times.begin(), times.end())) {
    throw ConfigError("rolling index: time stamps must be nondecreasing");
  }
  NeighborIndex idx;
  idx.strategy_ = NeighborStrategy::RollingWindow;
  idx.n_ = validation.size();
  idx.data_fingerprint_ = validation.fingerprint();
  idx.times_ = std::move(times);
  return idx;
}

std::vector<std::size_t> NeighborIndex::neighborhood(FeatureView x, std::size_t k,
                                                     double query_time) const {
  if (k == 0) throw ConfigError("neighbourhood size k must be at least 1");
  if (k > n_) {
    throw ConfigError("neighbourhood size k = " + std::to_string(k) + " exceeds n_val = " +
                      std::to_string(n_));
  }
  if (strategy_ == NeighborStrategy::RollingWindow) {
    const auto avail = static_cast<std::size_t>(
        std::lower_bound(times_.begin(), times_.end(), query_time) - times_.begin());
    if (avail < k) {
      throw ConfigError("rolling window: only " + std::to_string(avail) +
                        " rows precede the query time, k = " + std::to_string(k));
    }
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = avail - 1 - i;
    return out;
  }
  const auto hx = map_.apply(x);
  return tree_ ? tree_->nearest(hx, k) : linear_scan_nearest(mapped_, hx, k);
}

std::size_t resolve_k(std::size_t n_val, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("k fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_val)));
  return std::max<std::size_t>(k, 1);
}

namespace {

void check_provenance(const PredictiveModel& model, const PitMatrix& pit,
                      const NeighborIndex& index) {
  if (pit.data_fingerprint != index.data_fingerprint()) {
    throw ConfigError("PIT matrix and neighbour index were built from different validation sets");
  }
  if (pit.model_fingerprint != model.fingerprint()) {
    throw ConfigError("PIT matrix was computed under a different base model");
  }
  if (pit.dim() != model.dim() || pit.size() != index.size()) {
    throw ConfigError("PIT matrix shape does not match model and index");
  }
}

RowMatrix map_through_quantiles(const PredictiveModel& model, const PitMatrix& pit,
                                std::span<const std::size_t> rows, FeatureView x) {
  const auto d = static_cast<Eigen::Index>(model.dim());
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index l = 0; l < d; ++l) {
      out(static_cast<Eigen::Index>(r), l) = clamped_quantile(
          model.marginal(static_cast<std::size_t>(l)),
          pit.values(static_cast<Eigen::Index>(rows[r]), l), x);
    }
  }
  return out;
}

}  // namespace

RowMatrix knn_recalibrated_sample(const PredictiveModel& model, const PitMatrix& pit,
                                  const NeighborIndex& index, FeatureView x, std::size_t k,
                                  double query_time) {
  check_provenance(model, pit, index);
  const auto rows = index.neighborhood(x, k, query_time);
  return map_through_quantiles(model, pit, rows, x);
}

KnnRecalibrator::KnnRecalibrator(std::shared_ptr<const PredictiveModel> model, PitMatrix pit,
                                 NeighborIndex index, std::size_t k)
    : model_(std::move(model)), pit_(std::move(pit)), index_(std::move(index)), k_(k) {
  check_provenance(*model_, pit_, index_);
  if (k_ == 0 || k_ > index_.size()) {
    throw ConfigError("neighbourhood size k = " + std::to_string(k_) + " must lie in [1, " +
                      std::to_string(index_.size()) + "]");
  }
}

RowMatrix KnnRecalibrator::sample(FeatureView x, double query_time) const {
  const auto rows = index_.neighborhood(x, k_, query_time);
  return map_through_quantiles(*model_, pit_, rows, x);
}

}  // namespace pitrecal
