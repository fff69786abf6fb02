#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/diagnostics.hpp"
#include "pitrecal/predictive.hpp"
#include "pitrecal/simlab.hpp"
#include "test_util.hpp"

using namespace pitrecal;

namespace {

std::vector<double> uniforms(std::size_t n, Rng& rng) {
  std::vector<double> u(n);
  for (auto& v : u) v = rng.uniform();
  return u;
}

}  // namespace

TEST(Cvm, AnalyticMinimum) {
  std::vector<double> u(100);
  for (int i = 0; i < 100; ++i) u[i] = (2.0 * (i + 1) - 1.0) / 200.0;
  EXPECT_NEAR(cvm_uniform(u), 1.0 / 1200.0, 1e-15);
}

TEST(Cvm, AllHalf) {
  const std::vector<double> u(100, 0.5);
  // Frozen from the independent summation oracle: 1/1200 + 333300/40000.
  const double frozen = 8.333333333333334;
  EXPECT_NEAR(testutil::cvm_oracle(u), frozen, 1e-12);
  EXPECT_NEAR(cvm_uniform(u), frozen, 1e-12);
}

TEST(Cvm, MatchesOracleAndIsPermutationInvariant) {
  Rng rng(1);
  auto u = uniforms(777, rng);
  for (auto& v : u) v = v * v;
  const double a = cvm_uniform(u);
  EXPECT_NEAR(a, testutil::cvm_oracle(u), 1e-12);
  std::reverse(u.begin(), u.end());
  EXPECT_EQ(cvm_uniform(u), a);
}

TEST(Cvm, Errors) {
  const std::vector<double> one{0.5};
  EXPECT_THROW(cvm_uniform(one), DomainError);
  const std::vector<double> bad{0.5, 1.5};
  EXPECT_THROW(cvm_uniform(bad), DomainError);
}

TEST(Cvm, UniformDrawsBelowCritical) {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::derive(seed, "cvm-null");
    ok += cvm_uniform(uniforms(4000, rng)) < kCvmCritical5;
  }
  EXPECT_GE(ok, 95);
}

TEST(Cvm, NullRejectionRates) {
  int r5 = 0, r1 = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng = Rng::derive(seed, "cvm-rate");
    const double w = cvm_uniform(uniforms(1000, rng));
    r5 += w > kCvmCritical5;
    r1 += w > kCvmCritical1;
  }
  EXPECT_NEAR(r5 / 1000.0, 0.05, 0.02);
  EXPECT_NEAR(r1 / 1000.0, 0.01, 0.02);
}

TEST(Ks, SimpleValues) {
  const std::vector<double> u{0.5, 0.5};
  EXPECT_DOUBLE_EQ(ks_uniform(u), 0.5);
  std::vector<double> even(10);
  for (int i = 0; i < 10; ++i) even[i] = (i + 0.5) / 10.0;
  EXPECT_NEAR(ks_uniform(even), 0.05, 1e-15);
}

TEST(Histogram, LeftClosedBins) {
  const std::vector<double> v{0.1, 0.5, 0.9};
  EXPECT_EQ(histogram(v, 2), (std::vector<std::size_t>{1, 2}));
  const std::vector<double> ends{0.0, 1.0};
  EXPECT_EQ(histogram(ends, 4), (std::vector<std::size_t>{1, 0, 0, 1}));
}

TEST(Histogram, EmptyInput) {
  const std::vector<double> v;
  EXPECT_EQ(histogram(v, 20), std::vector<std::size_t>(20, 0));
}

TEST(Histogram, UniformCountsWithinFiveSigma) {
  Rng rng(5);
  const auto u = uniforms(100000, rng);
  const auto h = histogram(u, 20);
  EXPECT_EQ(std::accumulate(h.begin(), h.end(), std::size_t{0}), 100000u);
  for (auto c : h) EXPECT_NEAR(static_cast<double>(c), 5000.0, 350.0);
}

TEST(UniformityReport, CountsSumToN) {
  Rng rng(6);
  const auto u = uniforms(321, rng);
  const auto r = uniformity_report(u, 7);
  EXPECT_EQ(r.n, 321u);
  EXPECT_EQ(std::accumulate(r.histogram.begin(), r.histogram.end(), std::size_t{0}), 321u);
  EXPECT_GE(r.cvm_statistic, 0.0);
  EXPECT_GE(r.ks_statistic, 0.0);
}

TEST(CalibrationCurve, SaturatesAboveSupportAndSinglePoint) {
  const auto data = scenario_dataset(CopulaScenario::parse("TTT"), 2);
  const std::vector<double> grid{1e6};
  const auto curve = marginal_calibration_curve(*data.forecast, 0, data.test, grid);
  ASSERT_EQ(curve.size(), 1u);
  EXPECT_EQ(curve[0].avg_cdf, 1.0);
  EXPECT_EQ(curve[0].emp_cdf, 1.0);
}

TEST(CalibrationCurve, TrueModelSmallGap) {
  const auto data = scenario_dataset(CopulaScenario::parse("TTT"), 3);
  std::vector<double> grid;
  for (double y = -4.0; y <= 6.0; y += 0.1) grid.push_back(y);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto curve = marginal_calibration_curve(*data.forecast, l, data.test, grid);
    EXPECT_LT(max_calibration_gap(curve), 0.03) << l;
  }
}

TEST(CalibrationCurve, BiasedModelLargeGap) {
  const auto data = scenario_dataset(CopulaScenario::parse("FTT"), 3);
  std::vector<double> grid;
  for (double y = -4.0; y <= 6.0; y += 0.1) grid.push_back(y);
  const auto curve = marginal_calibration_curve(*data.forecast, 0, data.test, grid);
  EXPECT_GT(max_calibration_gap(curve), 0.05);
}

TEST(Assess, DeterministicAndShaped) {
  const auto data = scenario_dataset(CopulaScenario::parse("TTT"), 4);
  Dataset small = data.test.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto model = data.forecast;
  const ConditionalSampler sampler = [&](std::size_t, FeatureView x, Rng& rng) {
    return model->joint_draw(x, rng, 300);
  };
  AssessConfig cfg;
  cfg.seed = 5;
  const auto a = assess_calibration(sampler, model.get(), small, cfg);
  const auto b = assess_calibration(sampler, model.get(), small, cfg);
  EXPECT_EQ(a.marginal_pit, b.marginal_pit);
  EXPECT_EQ(a.coppit_values(), b.coppit_values());
  EXPECT_EQ(a.kendall.size(), 21u);
  EXPECT_EQ(a.margins.size(), 2u);
  EXPECT_EQ(a.coppit.size(), 10u);
  // Closed-form marginal PITs are the model CDF at the observation.
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_EQ(a.marginal_pit(static_cast<Eigen::Index>(i), 1),
              model->marginal(1).cdf(small.y(static_cast<Eigen::Index>(i), 1), small.features(i)));
  const auto j = to_json(a);
  EXPECT_TRUE(j.contains("margins"));
  EXPECT_TRUE(j.contains("coppit"));
  EXPECT_TRUE(j.contains("kendall_max_gap"));
}

TEST(Assess, EmpiricalPitFromSample) {
  // A sampler returning a fixed sample {0, 1, 2, 3} yields PIT #{s < y} / 4
  // plus nu / 4 on ties.
  Dataset d;
  d.x = RowMatrix::Zero(2, 1);
  d.y = RowMatrix(2, 2);
  d.y << 1.5, 10.0, -1.0, 2.0;
  const ConditionalSampler sampler = [](std::size_t, FeatureView, Rng&) {
    RowMatrix s(4, 2);
    s << 0, 0, 1, 1, 2, 2, 3, 3;
    return s;
  };
  AssessConfig cfg;
  cfg.seed = 9;
  const auto a = assess_calibration(sampler, nullptr, d, cfg);
  EXPECT_EQ(a.marginal_pit(0, 0), 0.5);
  EXPECT_EQ(a.marginal_pit(0, 1), 1.0);
  EXPECT_EQ(a.marginal_pit(1, 0), 0.0);
  Rng rng = Rng::derive(9, "assess", 1);
  rng.uniform();
  const double nu = rng.uniform();
  EXPECT_DOUBLE_EQ(a.marginal_pit(1, 1), 0.5 + nu * 0.25);
}
