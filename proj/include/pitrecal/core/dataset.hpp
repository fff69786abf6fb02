#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "pitrecal/core/matrix.hpp"

namespace pitrecal {

// Paired features and responses, one observation per row.
struct Dataset {
  RowMatrix x;  // n x q
  RowMatrix y;  // n x d

  std::size_t size() const { return static_cast<std::size_t>(y.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(x.cols()); }
  std::size_t response_dim() const { return static_cast<std::size_t>(y.cols()); }

  FeatureView features(std::size_t i) const { return row_view(x, static_cast<Eigen::Index>(i)); }
  FeatureView response(std::size_t i) const { return row_view(y, static_cast<Eigen::Index>(i)); }

  Dataset subset(std::span<const std::size_t> rows) const;

  // Content digest over shapes and values; used to tie derived artifacts
  // (PIT matrices, neighbour indexes, flows) to the data they came from.
  std::string fingerprint() const;
};

}  // namespace pitrecal
