#pragma once

#include <Eigen/Dense>
#include <span>

namespace pitrecal {

// n x d tables (samples, PIT values, datasets) are stored row-major so that a
// row is a contiguous feature or response vector.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using FeatureView = std::span<const double>;

inline FeatureView row_view(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace pitrecal
