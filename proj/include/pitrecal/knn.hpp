#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/matrix.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/predictive.hpp"

namespace pitrecal {

// Feature map h: selects columns of x and optionally standardizes them.
class FeatureMap {
 public:
  // All q columns.
  static FeatureMap identity(std::size_t q);
  static FeatureMap select(std::vector<std::size_t> columns);

  // Per-column standardization fitted on `features` (zero spread maps to 1).
  void fit_standardization(const RowMatrix& features);

  std::size_t input_dim_required() const;
  std::size_t output_dim() const { return columns_.size(); }
  void apply(FeatureView x, std::span<double> out) const;
  std::vector<double> apply(FeatureView x) const;
  RowMatrix apply_rows(const RowMatrix& features) const;
  std::string describe() const;

  const std::vector<std::size_t>& columns() const { return columns_; }
  const std::vector<double>& center() const { return center_; }
  const std::vector<double>& scale() const { return scale_; }

 private:
  std::vector<std::size_t> columns_;
  std::vector<double> center_;
  std::vector<double> scale_;
};

// Exact k-nearest-neighbour search in Euclidean distance. Equal distances are
// ordered by the smaller point index.
class KdTree {
 public:
  explicit KdTree(RowMatrix points, std::size_t leaf_size = 8);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  // Indices of the k nearest points, nearest first.
  std::vector<std::size_t> nearest(FeatureView query, std::size_t k) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };
  std::size_t build(std::size_t begin, std::size_t end);

  RowMatrix points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> index_;
  std::vector<Node> nodes_;
};

// Brute-force counterpart with the same ordering rule.
std::vector<std::size_t> linear_scan_nearest(const RowMatrix& points, FeatureView query,
                                             std::size_t k);

enum class NeighborStrategy { Euclidean, RollingWindow };

// Neighbourhoods over a validation set: Euclidean nearest neighbours of h(x),
// or the most recent rows preceding a query time.
class NeighborIndex {
 public:
  // Exact search uses a k-d tree when h has at most this many outputs.
  static constexpr std::size_t kKdTreeMaxDim = 8;

  static NeighborIndex euclidean(const Dataset& validation, FeatureMap map);
  // times must be nondecreasing, one per validation row.
  static NeighborIndex rolling(const Dataset& validation, std::vector<double> times);

  NeighborStrategy strategy() const { return strategy_; }
  std::size_t size() const { return n_; }
  const std::string& data_fingerprint() const { return data_fingerprint_; }
  const FeatureMap& feature_map() const { return map_; }

  // Euclidean: the k smallest distances, ties to the smaller index.
  // Rolling: the k latest rows with time < query_time, most recent first.
  std::vector<std::size_t> neighborhood(
      FeatureView x, std::size_t k,
      double query_time = std::numeric_limits<double>::infinity()) const;

 private:
  NeighborStrategy strategy_ = NeighborStrategy::Euclidean;
  std::size_t n_ = 0;
  std::string data_fingerprint_;
  FeatureMap map_;
  RowMatrix mapped_;
  std::shared_ptr<const KdTree> tree_;
  std::vector<double> times_;
};

// k resolved from a fraction of n_val (rounded, at least 1) or taken as given.
std::size_t resolve_k(std::size_t n_val, double fraction);

// Recalibrated sample at x: row r is (F_1^{-1}(p_1 | x), ..., F_d^{-1}(p_d | x))
// for the r-th neighbour's stored PIT vector p.
RowMatrix knn_recalibrated_sample(const PredictiveModel& model, const PitMatrix& pit,
                                  const NeighborIndex& index, FeatureView x, std::size_t k,
                                  double query_time = std::numeric_limits<double>::infinity());

// Holds a checked (model, PIT, index) triple for repeated queries.
class KnnRecalibrator {
 public:
  KnnRecalibrator(std::shared_ptr<const PredictiveModel> model, PitMatrix pit,
                  NeighborIndex index, std::size_t k);

  std::size_t k() const { return k_; }
  const PitMatrix& pit() const { return pit_; }
  const NeighborIndex& index() const { return index_; }
  RowMatrix sample(FeatureView x,
                   double query_time = std::numeric_limits<double>::infinity()) const;

 private:
  std::shared_ptr<const PredictiveModel> model_;
  PitMatrix pit_;
  NeighborIndex index_;
  std::size_t k_;
};

}  // namespace pitrecal
