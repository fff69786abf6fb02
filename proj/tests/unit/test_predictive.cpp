#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/normal.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/predictive.hpp"
#include "test_util.hpp"

using namespace pitrecal;

namespace {

const std::vector<double> kNoFeatures;

FeatureView none() { return kNoFeatures; }

}  // namespace

TEST(EmpiricalCdf, Examples) {
  const std::vector<double> s{1, 2, 3};
  EXPECT_DOUBLE_EQ(empirical_cdf(s, 2.0), 2.0 / 3.0);
  EXPECT_EQ(empirical_cdf(s, 0.0), 0.0);
  const std::vector<double> t{0, 0, 1, 1};
  EXPECT_EQ(empirical_cdf_left(t, 0.0), 0.0);
  EXPECT_EQ(empirical_cdf_left(t, 1.0), 0.5);
  EXPECT_EQ(empirical_cdf(t, 0.0), 0.5);
}

TEST(EmpiricalCdf, EmptyIsError) {
  const std::vector<double> empty;
  try {
    empirical_cdf(empty, 0.0);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "empty support");
  }
  EXPECT_THROW(empirical_cdf_left(empty, 0.0), DomainError);
  EXPECT_THROW(empirical_quantile(empty, 0.5), DomainError);
}

TEST(EmpiricalQuantile, Examples) {
  const std::vector<double> s{3, 1, 2};
  EXPECT_EQ(empirical_quantile(s, 0.5), 2.0);
  EXPECT_EQ(empirical_quantile(s, 1.0), 3.0);
  EXPECT_EQ(empirical_quantile(s, 0.0), 1.0);
  EXPECT_EQ(empirical_quantile(s, 1.0 / 3.0), 1.0);
  EXPECT_EQ(empirical_quantile(s, std::nextafter(1.0 / 3.0, 1.0)), 2.0);
  EXPECT_THROW(empirical_quantile(s, -0.01), DomainError);
  EXPECT_THROW(empirical_quantile(s, 1.01), DomainError);
}

TEST(EmpiricalQuantile, NormalSampleTail) {
  Rng rng(2024);
  std::vector<double> s(100000);
  for (auto& v : s) v = rng.normal();
  EXPECT_NEAR(empirical_quantile(s, 0.975), 1.96, 0.03);
}

TEST(EmpiricalQuantile, Monotone) {
  Rng rng(1);
  std::vector<double> s(257);
  for (auto& v : s) v = rng.normal();
  double prev = -INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double q = empirical_quantile(s, i / 1000.0);
    EXPECT_GE(q, prev);
    prev = q;
  }
}

TEST(EmpiricalMarginal, OrderStatisticRule) {
  EmpiricalMarginal m({5, 1, 4, 2, 3});
  EXPECT_EQ(m.sorted_samples()[0], 1.0);
  EXPECT_EQ(m.quantile(0.0, none()), 1.0);
  EXPECT_EQ(m.quantile(0.2, none()), 1.0);
  EXPECT_EQ(m.quantile(0.21, none()), 2.0);
  EXPECT_EQ(m.quantile(1.0, none()), 5.0);
  EXPECT_EQ(m.cdf(3.0, none()), 0.6);
  EXPECT_EQ(m.cdf_left(3.0, none()), 0.4);
  EXPECT_FALSE(m.is_continuous());
  EXPECT_THROW(EmpiricalMarginal(std::vector<double>{}), DomainError);
}

TEST(EmpiricalMarginal, ConvergesToGenerator) {
  Rng rng(77);
  const GaussianMarginal g(1.5, 2.0);
  std::vector<double> s(100000);
  for (auto& v : s) v = g.draw(none(), rng);
  const EmpiricalMarginal e(s);
  double d = 0.0;
  for (double y = -8.0; y <= 11.0; y += 0.01) {
    d = std::max(d, std::abs(e.cdf(y, none()) - g.cdf(y, none())));
  }
  EXPECT_LT(d, 0.02);
}

TEST(GaussianMarginal, RoundTripOnGrid) {
  const GaussianMarginal g(
      [](FeatureView x) { return NormalParams{2.0 - x[0], std::sqrt(1.0 / x[1])}; }, "g");
  const std::vector<double> x{0.3, 0.7};
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    EXPECT_LT(std::abs(g.cdf(g.quantile(p, x), x) - p), 1e-9) << p;
  }
}

TEST(GaussianMarginal, ParametersAndValues) {
  const GaussianMarginal g(1.0, 2.0);
  EXPECT_DOUBLE_EQ(g.cdf(1.0, none()), 0.5);
  EXPECT_NEAR(g.quantile(0.975, none()), 1.0 + 2.0 * 1.959963984540054, 1e-9);
  EXPECT_TRUE(g.is_continuous());
  EXPECT_THROW(GaussianMarginal(0.0, 0.0), DomainError);
  EXPECT_THROW(g.quantile(1.5, none()), DomainError);
}

TEST(GaussianMarginal, CdfAndQuantileMonotone) {
  Rng rng(4);
  const GaussianMarginal g(-0.3, 0.7);
  for (int t = 0; t < 1000; ++t) {
    const double a = 6 * rng.normal(), b = 6 * rng.normal();
    EXPECT_LE(g.cdf(std::min(a, b), none()), g.cdf(std::max(a, b), none()));
    const double p = rng.uniform_open(), q = rng.uniform_open();
    EXPECT_LE(g.quantile(std::min(p, q), none()), g.quantile(std::max(p, q), none()));
  }
}

TEST(DiscreteMarginal, BernoulliCdfAndQuantile) {
  const auto b = DiscreteMarginal::bernoulli(0.3);
  EXPECT_NEAR(b.cdf(0.0, none()), 0.7, 1e-15);
  EXPECT_EQ(b.cdf_left(0.0, none()), 0.0);
  EXPECT_NEAR(b.cdf_left(1.0, none()), 0.7, 1e-15);
  EXPECT_EQ(b.cdf(1.0, none()), 1.0);
  EXPECT_EQ(b.cdf(-0.5, none()), 0.0);
  EXPECT_EQ(b.quantile(0.0, none()), 0.0);
  EXPECT_EQ(b.quantile(0.7, none()), 0.0);
  EXPECT_EQ(b.quantile(0.71, none()), 1.0);
  EXPECT_EQ(b.quantile(1.0, none()), 1.0);
  EXPECT_FALSE(b.is_continuous());
}

TEST(DiscreteMarginal, RejectsBadInput) {
  EXPECT_THROW(DiscreteMarginal({0, 1}, {0.5, 0.6}), DomainError);
  EXPECT_THROW(DiscreteMarginal({1, 0}, {0.5, 0.5}), DomainError);
  EXPECT_THROW(DiscreteMarginal({}, {}), DomainError);
}

TEST(CdfOnlyMarginal, BisectionMatchesClosedForm) {
  const CdfOnlyMarginal m([](double y, FeatureView) { return normal_cdf(y); }, -40.0, 40.0, "phi");
  for (double p : {0.001, 0.1, 0.5, 0.9, 0.999}) {
    EXPECT_NEAR(m.quantile(p, none()), normal_quantile(p), 1e-9) << p;
  }
}

TEST(Bisection, GeneralizedInverseOfStep) {
  const auto step = [](double y) { return y < 1.0 ? 0.0 : 1.0; };
  EXPECT_NEAR(bisection_quantile(step, 0.5, -10.0, 10.0), 1.0, 1e-9);
}

TEST(ClampedQuantile, CountsClampsForUnboundedSupport) {
  const GaussianMarginal g(0.0, 1.0);
  ClampTally tally;
  const double lo = clamped_quantile(g, 0.0, none(), &tally);
  const double hi = clamped_quantile(g, 1.0, none(), &tally);
  EXPECT_EQ(tally.count, 2u);
  EXPECT_DOUBLE_EQ(lo, normal_quantile(kQuantileClamp));
  EXPECT_DOUBLE_EQ(hi, normal_quantile(1.0 - kQuantileClamp));
  EXPECT_DOUBLE_EQ(clamped_quantile(g, 0.3, none(), &tally), normal_quantile(0.3));
  EXPECT_EQ(tally.count, 2u);
}

TEST(ClampedQuantile, EmpiricalUsesSupportExtremes) {
  const EmpiricalMarginal e({2, 7, 4});
  ClampTally tally;
  EXPECT_EQ(clamped_quantile(e, 0.0, none(), &tally), 2.0);
  EXPECT_EQ(clamped_quantile(e, 1.0, none(), &tally), 7.0);
  EXPECT_EQ(tally.count, 0u);
}

TEST(IndependentModel, JointDrawMatchesMarginals) {
  auto m1 = std::make_shared<GaussianMarginal>(0.0, 1.0);
  auto m2 = std::make_shared<GaussianMarginal>(3.0, 0.5);
  const IndependentModel model({m1, m2});
  EXPECT_EQ(model.dim(), 2u);
  Rng rng(8);
  const auto draws = model.joint_draw(none(), rng, 20000);
  ASSERT_EQ(draws.rows(), 20000);
  ASSERT_EQ(draws.cols(), 2);
  const double tol = 1.63 / std::sqrt(20000.0);
  EXPECT_LT(testutil::kolmogorov_distance(testutil::column(draws, 0),
                                          [](double y) { return testutil::phi(y); }),
            tol);
  EXPECT_LT(testutil::kolmogorov_distance(testutil::column(draws, 1),
                                          [](double y) { return testutil::phi((y - 3.0) / 0.5); }),
            tol);
}

TEST(PredictiveModel, FingerprintTracksDescription) {
  auto a = std::make_shared<GaussianMarginal>(0.0, 1.0);
  auto b = std::make_shared<GaussianMarginal>(0.0, 2.0);
  const IndependentModel m1({a}), m2({a}), m3({b});
  EXPECT_EQ(m1.fingerprint(), m2.fingerprint());
  EXPECT_NE(m1.fingerprint(), m3.fingerprint());
}

TEST(SampleModel, EmpiricalMarginalsAndResampling) {
  RowMatrix d(4, 2);
  d << 1, 10, 2, 20, 3, 30, 4, 40;
  const SampleModel model(d);
  EXPECT_EQ(model.dim(), 2u);
  EXPECT_EQ(model.marginal(1).quantile(0.5, none()), 20.0);
  Rng rng(3);
  const auto draws = model.joint_draw(none(), rng, 100);
  for (int r = 0; r < 100; ++r) EXPECT_EQ(draws(r, 1), 10.0 * draws(r, 0));
  EXPECT_THROW(SampleModel(RowMatrix(0, 2)), DomainError);
}
