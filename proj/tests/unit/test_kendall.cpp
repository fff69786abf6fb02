#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/kendall.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/predictive.hpp"
#include "pitrecal/simlab.hpp"

using namespace pitrecal;

namespace {

RowMatrix rows(std::initializer_list<std::initializer_list<double>> init) {
  RowMatrix m(static_cast<Eigen::Index>(init.size()),
              static_cast<Eigen::Index>(init.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : init) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

// Exhaustive pairwise dominance, independent of the library's sweep.
std::vector<std::size_t> brute_counts(const RowMatrix& s) {
  std::vector<std::size_t> out(static_cast<std::size_t>(s.rows()), 0);
  for (Eigen::Index k = 0; k < s.rows(); ++k)
    for (Eigen::Index j = 0; j < s.rows(); ++j)
      out[static_cast<std::size_t>(k)] += ((s.row(j).array() <= s.row(k).array()).all()) ? 1 : 0;
  return out;
}

RowMatrix integer_sample(Rng& rng, Eigen::Index m, Eigen::Index d, std::size_t levels) {
  RowMatrix s(m, d);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index l = 0; l < d; ++l) s(i, l) = static_cast<double>(rng.uniform_index(levels));
  return s;
}

}  // namespace

TEST(PseudoObservations, Chain) {
  const auto ks = pseudo_observations(rows({{0, 0}, {1, 1}, {2, 2}}));
  ASSERT_EQ(ks.w.size(), 3u);
  EXPECT_DOUBLE_EQ(ks.w[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(ks.w[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(ks.w[2], 1.0);
}

TEST(PseudoObservations, Antichain) {
  const auto ks = pseudo_observations(rows({{0, 1}, {1, 0}}));
  EXPECT_EQ(ks.w, (std::vector<double>{0.5, 0.5}));
}

TEST(PseudoObservations, InsufficientSample) {
  try {
    pseudo_observations(rows({{0, 1}}));
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "insufficient sample");
  }
}

TEST(DominanceCounts, MatchesBruteForceWithTies) {
  Rng rng(31);
  for (Eigen::Index d : {1, 2, 3, 4}) {
    for (int trial = 0; trial < 30; ++trial) {
      const auto m = static_cast<Eigen::Index>(2 + rng.uniform_index(60));
      const auto s = integer_sample(rng, m, d, 1 + rng.uniform_index(6));
      EXPECT_EQ(dominance_counts(s), brute_counts(s)) << "d=" << d << " m=" << m;
    }
  }
}

TEST(DominanceCounts, MatchesBruteForceContinuous) {
  Rng rng(32);
  RowMatrix s(3000, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << rng.normal(), rng.normal();
  EXPECT_EQ(dominance_counts(s), brute_counts(s));
}

TEST(PseudoObservations, SelfDominanceLowerBound) {
  Rng rng(2);
  RowMatrix s(500, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << rng.normal(), rng.normal();
  const auto ks = pseudo_observations(s);
  EXPECT_GE(ks.w.front(), 1.0 / 500.0);
  EXPECT_TRUE(std::is_sorted(ks.w.begin(), ks.w.end()));
}

TEST(PseudoObservations, InvariantUnderIncreasingMaps) {
  Rng rng(5);
  RowMatrix s(400, 3);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << rng.normal(), rng.normal(), rng.normal();
  RowMatrix t(400, 3);
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    t(i, 0) = std::exp(s(i, 0));
    t(i, 1) = s(i, 1) * s(i, 1) * s(i, 1) + 2.0;
    t(i, 2) = std::atan(s(i, 2));
  }
  EXPECT_EQ(dominance_counts(s), dominance_counts(t));
  EXPECT_EQ(pseudo_observations(s).w, pseudo_observations(t).w);
  const std::vector<double> y{0.1, -0.2, 0.3};
  const std::vector<double> ty{std::exp(0.1), -0.008 + 2.0, std::atan(0.3)};
  const auto a = count_dominated(s, y);
  const auto b = count_dominated(t, ty);
  EXPECT_EQ(a.weak, b.weak);
  EXPECT_EQ(a.strict, b.strict);
}

TEST(KendallCdf, Examples) {
  const auto ks = pseudo_observations(rows({{0, 0}, {1, 1}, {2, 2}}));
  EXPECT_DOUBLE_EQ(kendall_cdf(ks, 0.5), 1.0 / 3.0);
  EXPECT_EQ(kendall_cdf(ks, 1.0), 1.0);
  EXPECT_EQ(kendall_cdf(ks, 0.0), 0.0);
}

TEST(KendallCdf, IsValidCdf) {
  Rng rng(6);
  RowMatrix s(300, 2);
  for (Eigen::Index i = 0; i < s.rows(); ++i) s.row(i) << rng.normal(), rng.normal();
  const auto ks = pseudo_observations(s);
  double prev = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double v = kendall_cdf(ks, i / 1000.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_EQ(kendall_cdf(ks, 0.0), 0.0);
  EXPECT_EQ(kendall_cdf(ks, 1.0), 1.0);
}

TEST(KendallCdf, IndependenceOracle) {
  Rng rng(2718);
  const Eigen::Index m = 1000000;
  RowMatrix s(m, 2);
  for (Eigen::Index i = 0; i < m; ++i) s.row(i) << rng.uniform(), rng.uniform();
  const auto ks = pseudo_observations(s);
  EXPECT_NEAR(kendall_cdf(ks, 0.5), 0.8466, 0.003);
}

TEST(Coppit, BelowSampleMinimumIsZero) {
  const auto s = rows({{0, 0}, {1, 2}, {2, 1}});
  const std::vector<double> y{-1, -1};
  const auto r = coppit_from_sample(s, y, 0.7);
  EXPECT_EQ(r.v_right, 0.0);
  EXPECT_EQ(r.v_left, 0.0);
  EXPECT_EQ(r.u, 0.0);
}

TEST(Coppit, StrictAndWeakDominance) {
  // w = (1/4, 2/4, 2/4, 1); y = (1, 1) weakly dominates (0,0) and (1,0),
  // strictly only (0,0).
  const auto s = rows({{0, 0}, {1, 0}, {0, 2}, {2, 2}});
  const std::vector<double> y{1, 1};
  const auto r = coppit_from_sample(s, y, 0.5);
  EXPECT_DOUBLE_EQ(r.joint_cdf, 0.5);
  EXPECT_DOUBLE_EQ(r.v_right, 0.75);
  EXPECT_DOUBLE_EQ(r.v_left, 0.25);
  EXPECT_DOUBLE_EQ(r.u, 0.5);
  EXPECT_LE(r.v_left, r.v_right);
}

TEST(Coppit, OneDimensionalReducesToPit) {
  auto g = std::make_shared<GaussianMarginal>(0.5, 2.0);
  const IndependentModel model({g});
  const std::vector<double> x;
  Rng rng(99);
  for (double y : {-2.0, 0.0, 0.5, 1.7, 4.0}) {
    const std::vector<double> yy{y};
    const auto r = coppit(model, x, yy, 100000, rng);
    EXPECT_NEAR(r.u, randomized_pit(*g, x, y, 0.5), 0.01) << y;
  }
}

TEST(Coppit, MinimumSampleEnforced) {
  auto g = std::make_shared<GaussianMarginal>(0.0, 1.0);
  const IndependentModel model({g, g});
  Rng rng(1);
  const std::vector<double> x, y{0, 0};
  EXPECT_THROW(coppit(model, x, y, 50, rng), ConfigError);
  EXPECT_NO_THROW(coppit(model, x, y, 50, rng, 10));
}

TEST(KendallDiagram, EndpointsAndTrueModel) {
  const auto data = scenario_dataset(CopulaScenario::parse("TTT"), 11);
  const auto grid = omega_grid(21);
  ASSERT_EQ(grid.size(), 21u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0);
  const auto diagram = kendall_diagram(*data.forecast, data.validation, grid, 2000, 12);
  EXPECT_EQ(diagram.back().lhs, 1.0);
  EXPECT_EQ(diagram.back().rhs, 1.0);
  EXPECT_GE(diagram.front().lhs, 0.0);
  EXPECT_EQ(diagram.front().rhs, 0.0);
  EXPECT_LT(max_kendall_gap(diagram), 0.05);
}

TEST(KendallDiagram, BuilderAverages) {
  KendallDiagramBuilder b({0.0, 0.5, 1.0});
  const auto ks1 = pseudo_observations(rows({{0, 0}, {1, 1}}));  // w = (1/2, 1)
  const auto ks2 = pseudo_observations(rows({{0, 1}, {1, 0}}));  // w = (1/2, 1/2)
  b.add(0.25, ks1);
  b.add(0.75, ks2);
  const auto d = b.finish();
  ASSERT_EQ(d.size(), 3u);
  EXPECT_DOUBLE_EQ(d[1].lhs, 0.5);
  EXPECT_DOUBLE_EQ(d[1].rhs, 0.75);
  EXPECT_DOUBLE_EQ(d[2].lhs, 1.0);
  EXPECT_DOUBLE_EQ(d[2].rhs, 1.0);
}
