#include "pitrecal/kendall.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pitrecal/core/error.hpp"

namespace pitrecal {
namespace {

class Fenwick {
 public:
  explicit Fenwick(std::size_t n) : tree_(n + 1, 0) {}
  void add(std::size_t pos) {  // 1-based
    for (; pos < tree_.size(); pos += pos & (~pos + 1)) ++tree_[pos];
  }
  std::size_t prefix(std::size_t pos) const {
    std::size_t s = 0;
    for (; pos > 0; pos -= pos & (~pos + 1)) s += tree_[pos];
    return s;
  }

 private:
  std::vector<std::size_t> tree_;
};

std::vector<std::size_t> dominance_1d(const RowMatrix& s) {
  std::vector<double> v(s.col(0).begin(), s.col(0).end());
  std::sort(v.begin(), v.end());
  std::vector<std::size_t> out(v.size());
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    out[static_cast<std::size_t>(k)] =
        static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), s(k, 0)) - v.begin());
  }
  return out;
}

std::vector<std::size_t> dominance_2d(const RowMatrix& s) {
  const auto m = static_cast<std::size_t>(s.rows());
  std::vector<double> second(s.col(1).begin(), s.col(1).end());
  std::sort(second.begin(), second.end());
  second.erase(std::unique(second.begin(), second.end()), second.end());

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return s(static_cast<Eigen::Index>(a), 0) < s(static_cast<Eigen::Index>(b), 0);
  });

  auto rank2 = [&](std::size_t k) {
    const double v = s(static_cast<Eigen::Index>(k), 1);
    return static_cast<std::size_t>(std::lower_bound(second.begin(), second.end(), v) -
                                    second.begin()) + 1;
  };

  Fenwick tree(second.size());
  std::vector<std::size_t> out(m);
  std::size_t g = 0;
  while (g < m) {
    // Points tied in the first coordinate dominate each other there, so a
    // whole tie group is inserted before any member is queried.
    std::size_t end = g + 1;
    const double first = s(static_cast<Eigen::Index>(order[g]), 0);
    while (end < m && s(static_cast<Eigen::Index>(order[end]), 0) == first) ++end;
    for (std::size_t i = g; i < end; ++i) tree.add(rank2(order[i]));
    for (std::size_t i = g; i < end; ++i) out[order[i]] = tree.prefix(rank2(order[i]));
    g = end;
  }
  return out;
}

std::vector<std::size_t> dominance_pairwise(const RowMatrix& s) {
  const auto m = s.rows();
  const auto d = s.cols();
  std::vector<std::size_t> out(static_cast<std::size_t>(m), 0);
  for (Eigen::Index k = 0; k < m; ++k) {
    std::size_t c = 0;
    for (Eigen::Index j = 0; j < m; ++j) {
      bool le = true;
      for (Eigen::Index l = 0; l < d && le; ++l) le = s(j, l) <= s(k, l);
      c += le;
    }
    out[static_cast<std::size_t>(k)] = c;
  }
  return out;
}

}  // namespace

double KendallSample::cdf(double omega) const {
  const auto n = std::upper_bound(w.begin(), w.end(), omega) - w.begin();
  return static_cast<double>(n) / static_cast<double>(m);
}

std::vector<std::size_t> dominance_counts(const RowMatrix& samples) {
  if (samples.cols() == 0) throw DomainError("dominance_counts: zero-dimensional sample");
  switch (samples.cols()) {
    case 1:
      return dominance_1d(samples);
    case 2:
      return dominance_2d(samples);
    default:
      return dominance_pairwise(samples);
  }
}

KendallSample pseudo_observations(const RowMatrix& samples) {
  if (samples.rows() < 2) throw DomainError("insufficient sample");
  const auto counts = dominance_counts(samples);
  KendallSample ks;
  ks.m = counts.size();
  ks.w.reserve(ks.m);
  const double md = static_cast<double>(ks.m);
  for (auto c : counts) ks.w.push_back(static_cast<double>(c) / md);
  std::sort(ks.w.begin(), ks.w.end());
  return ks;
}

double kendall_cdf(const KendallSample& ks, double omega) { return ks.cdf(omega); }

DominanceCount count_dominated(const RowMatrix& samples, FeatureView y) {
  if (static_cast<std::size_t>(samples.cols()) != y.size()) {
    throw ConfigError("count_dominated: dimension mismatch");
  }
  DominanceCount c;
  const auto d = samples.cols();
  for (Eigen::Index j = 0; j < samples.rows(); ++j) {
    bool le = true;
    bool lt = true;
    for (Eigen::Index l = 0; l < d && le; ++l) {
      const double v = samples(j, l);
      const double yl = y[static_cast<std::size_t>(l)];
      le = v <= yl;
      lt = lt && v < yl;
    }
    c.weak += le;
    c.strict += le && lt;
  }
  return c;
}

CoppitResult coppit_from_sample(const RowMatrix& sample, const KendallSample& ks, FeatureView y,
                                double upsilon) {
  if (!(upsilon >= 0.0 && upsilon <= 1.0)) throw DomainError("coppit: upsilon outside [0, 1]");
  const auto dom = count_dominated(sample, y);
  const double md = static_cast<double>(sample.rows());
  CoppitResult r;
  r.upsilon = upsilon;
  r.joint_cdf = static_cast<double>(dom.weak) / md;
  r.v_right = ks.cdf(r.joint_cdf);
  r.v_left = ks.cdf(static_cast<double>(dom.strict) / md);
  r.u = std::clamp(r.v_left + upsilon * (r.v_right - r.v_left), 0.0, 1.0);
  return r;
}

CoppitResult coppit_from_sample(const RowMatrix& sample, FeatureView y, double upsilon) {
  return coppit_from_sample(sample, pseudo_observations(sample), y, upsilon);
}

CoppitResult coppit(const PredictiveModel& model, FeatureView x, FeatureView y, std::size_t m,
                    Rng& rng, std::size_t min_m) {
  if (m < min_m) {
    throw ConfigError("coppit: Kendall sample size " + std::to_string(m) + " below minimum " +
                      std::to_string(min_m));
  }
  const RowMatrix sample = model.joint_draw(x, rng, m);
  return coppit_from_sample(sample, y, rng.uniform());
}

std::vector<double> omega_grid(std::size_t points) {
  if (points < 2) throw ConfigError("omega_grid: need at least two points");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

KendallDiagramBuilder::KendallDiagramBuilder(std::vector<double> grid)
    : grid_(std::move(grid)), lhs_(grid_.size(), 0.0), rhs_(grid_.size(), 0.0) {
  for (double w : grid_) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("kendall diagram: omega outside [0, 1]");
  }
}

void KendallDiagramBuilder::add(double joint_cdf, const KendallSample& ks) {
  for (std::size_t g = 0; g < grid_.size(); ++g) {
    lhs_[g] += joint_cdf <= grid_[g] ? 1.0 : 0.0;
    rhs_[g] += ks.cdf(grid_[g]);
  }
  ++n_;
}

std::vector<KendallDiagramPoint> KendallDiagramBuilder::finish() const {
  std::vector<KendallDiagramPoint> out(grid_.size());
  const double n = static_cast<double>(std::max<std::size_t>(n_, 1));
  for (std::size_t g = 0; g < grid_.size(); ++g) {
    out[g] = {grid_[g], lhs_[g] / n, rhs_[g] / n};
  }
  return out;
}

std::vector<KendallDiagramPoint> kendall_diagram(const PredictiveModel& model,
                                                 const Dataset& validation,
                                                 std::span<const double> grid, std::size_t m,
                                                 std::uint64_t seed) {
  KendallDiagramBuilder builder({grid.begin(), grid.end()});
  for (std::size_t i = 0; i < validation.size(); ++i) {
    Rng rng = Rng::derive(seed, "kendall", i);
    const RowMatrix sample = model.joint_draw(validation.features(i), rng, m);
    const auto ks = pseudo_observations(sample);
    const auto dom = count_dominated(sample, validation.response(i));
    builder.add(static_cast<double>(dom.weak) / static_cast<double>(m), ks);
  }
  return builder.finish();
}

double max_kendall_gap(std::span<const KendallDiagramPoint> diagram) {
  double gap = 0.0;
  for (const auto& p : diagram) gap = std::max(gap, std::fabs(p.lhs - p.rhs));
  return gap;
}

}  // namespace pitrecal
