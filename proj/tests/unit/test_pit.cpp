#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "pitrecal/core/error.hpp"
#include "pitrecal/core/normal.hpp"
#include "pitrecal/core/rng.hpp"
#include "pitrecal/diagnostics.hpp"
#include "pitrecal/pit.hpp"
#include "pitrecal/predictive.hpp"
#include "pitrecal/simlab.hpp"
#include "test_util.hpp"

using namespace pitrecal;

namespace {

const std::vector<double> kNoFeatures;

// y | x ~ N(x, (1 + x^2)) in both margins, x ~ N(0, 1).
std::shared_ptr<IndependentModel> hetero_model() {
  auto m = std::make_shared<GaussianMarginal>(
      [](FeatureView x) { return NormalParams{x[0], std::sqrt(1.0 + x[0] * x[0])}; }, "hetero");
  return std::make_shared<IndependentModel>(std::vector<std::shared_ptr<const MarginalCdf>>{m, m});
}

Dataset draw_from(const PredictiveModel& model, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.x = RowMatrix(static_cast<Eigen::Index>(n), 1);
  d.y = RowMatrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(model.dim()));
  for (std::size_t i = 0; i < n; ++i) {
    d.x(static_cast<Eigen::Index>(i), 0) = rng.normal();
    const auto y = model.joint_draw(d.features(i), rng, 1);
    d.y.row(static_cast<Eigen::Index>(i)) = y.row(0);
  }
  return d;
}

}  // namespace

TEST(RandomizedPit, ContinuousMedian) {
  const GaussianMarginal g(0.0, 1.0);
  for (double nu : {0.0, 0.3, 1.0}) EXPECT_EQ(randomized_pit(g, kNoFeatures, 0.0, nu), 0.5);
}

TEST(RandomizedPit, BernoulliExamples) {
  const auto b = DiscreteMarginal::bernoulli(0.3);
  EXPECT_NEAR(randomized_pit(b, kNoFeatures, 0.0, 0.5), 0.35, 1e-15);
  EXPECT_NEAR(randomized_pit(b, kNoFeatures, 1.0, 0.25), 0.775, 1e-15);
}

TEST(RandomizedPit, ContinuousInvariantToNu) {
  const GaussianMarginal g(1.0, 3.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double y = 5 * rng.normal();
    const double base = randomized_pit(g, kNoFeatures, y, 0.0);
    EXPECT_EQ(randomized_pit(g, kNoFeatures, y, rng.uniform()), base);
    EXPECT_EQ(randomized_pit(g, kNoFeatures, y, 1.0), base);
  }
}

TEST(RandomizedPit, NuOutsideUnitRejected) {
  const GaussianMarginal g(0.0, 1.0);
  EXPECT_THROW(randomized_pit(g, kNoFeatures, 0.0, 1.5), DomainError);
}

TEST(NormalizePit, Examples) {
  EXPECT_EQ(normalize_pit(0.5), 0.0);
  EXPECT_NEAR(normalize_pit(0.975), 1.95996, 1e-4);
  ClampTally tally;
  EXPECT_NEAR(normalize_pit(0.0, &tally), -4.7534, 1e-4);
  EXPECT_DOUBLE_EQ(normalize_pit(0.0), normal_quantile(1e-6));
  EXPECT_DOUBLE_EQ(normalize_pit(1.0, &tally), normal_quantile(1.0 - 1e-6));
  EXPECT_EQ(tally.count, 2u);
  EXPECT_THROW(normalize_pit(-0.1), DomainError);
}

TEST(NormalizePit, InvertsPhiOnCore) {
  for (double z = -4.0; z <= 4.0; z += 0.01) EXPECT_NEAR(normalize_pit(normal_cdf(z)), z, 1e-6);
}

TEST(PitMatrix, SingleRowShape) {
  auto model = hetero_model();
  const auto d = draw_from(*model, 1, 5);
  const auto pit = pit_matrix(*model, d, 9);
  ASSERT_EQ(pit.values.rows(), 1);
  ASSERT_EQ(pit.values.cols(), 2);
  EXPECT_TRUE((pit.values.array() >= 0.0).all() && (pit.values.array() <= 1.0).all());
}

TEST(PitMatrix, ReproducibleAndNormalized) {
  auto model = hetero_model();
  const auto d = draw_from(*model, 500, 5);
  const auto a = pit_matrix(*model, d, 9);
  const auto b = pit_matrix(*model, d, 9);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.normalized, b.normalized);
  EXPECT_EQ(a.model_fingerprint, model->fingerprint());
  EXPECT_EQ(a.data_fingerprint, d.fingerprint());
  for (Eigen::Index i = 0; i < a.values.rows(); ++i)
    for (Eigen::Index l = 0; l < 2; ++l)
      EXPECT_EQ(a.normalized(i, l), normalize_pit(a.values(i, l)));
}

TEST(PitMatrix, RowMajorRandomizationStream) {
  // Discrete margins expose the nu stream: entry (i, l) uses the (i d + l)-th
  // uniform of the "pit" substream.
  auto b = std::make_shared<DiscreteMarginal>(DiscreteMarginal::bernoulli(0.5));
  const IndependentModel model({b, b});
  Dataset d;
  d.x = RowMatrix::Zero(3, 1);
  d.y = RowMatrix::Zero(3, 2);
  const auto pit = pit_matrix(model, d, 123);
  Rng rng = Rng::derive(123, "pit");
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index l = 0; l < 2; ++l) EXPECT_DOUBLE_EQ(pit.values(i, l), 0.5 * rng.uniform());
}

TEST(PitMatrix, DimensionMismatchIsConfigError) {
  auto model = hetero_model();
  Dataset d;
  d.x = RowMatrix::Zero(2, 1);
  d.y = RowMatrix::Zero(2, 3);
  EXPECT_THROW(pit_matrix(*model, d, 1), ConfigError);
  d.y = RowMatrix::Zero(0, 2);
  d.x = RowMatrix::Zero(0, 1);
  EXPECT_THROW(pit_matrix(*model, d, 1), ConfigError);
}

TEST(PitMatrix, UniformUnderTrueModel) {
  auto model = hetero_model();
  int cvm_ok = 0, ks_ok = 0;
  const double n = 4000;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto d = draw_from(*model, 4000, 1000 + seed);
    const auto pit = pit_matrix(*model, d, seed);
    const auto col = testutil::column(pit.values, 0);
    cvm_ok += cvm_uniform(col) < 0.461;
    ks_ok += ks_uniform(col) < 1.36 / std::sqrt(n);
  }
  EXPECT_GE(cvm_ok, 18);
  EXPECT_GE(ks_ok, 18);
}

TEST(PitMatrix, BiasedFirstMarginDetected) {
  const auto data = scenario_dataset(CopulaScenario::parse("FTT"), 3);
  const auto pit = pit_matrix(*data.forecast, data.validation, 4);
  EXPECT_GT(cvm_uniform(testutil::column(pit.values, 0)), 0.461);
  EXPECT_LT(cvm_uniform(testutil::column(pit.values, 1)), 0.461);
}

TEST(PitMatrix, FromStoredValues) {
  RowMatrix v(2, 1);
  v << 0.0, 0.5;
  const auto pit = pit_matrix_from_values(v, 3, "m", "d");
  EXPECT_EQ(pit.clamp_count, 1u);
  EXPECT_EQ(pit.normalized(1, 0), 0.0);
  EXPECT_EQ(pit.model_fingerprint, "m");
}
