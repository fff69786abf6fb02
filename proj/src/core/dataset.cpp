#include "pitrecal/core/dataset.hpp"

#include <string_view>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"

namespace pitrecal {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()), y.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw ConfigError("dataset subset: row index out of range");
    const auto src = static_cast<Eigen::Index>(rows[r]);
    out.x.row(static_cast<Eigen::Index>(r)) = x.row(src);
    out.y.row(static_cast<Eigen::Index>(r)) = y.row(src);
  }
  return out;
}

std::string Dataset::fingerprint() const {
  std::string buf = "dataset:" + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) + "," +
                    std::to_string(y.rows()) + "x" + std::to_string(y.cols()) + ":";
  buf += sha256_hex(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  buf += sha256_hex(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
  return sha256_hex(buf);
}

}  // namespace pitrecal
