#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/dataset.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"
#include "pitrecal/core/normal.hpp"
#include "pitrecal/core/rng.hpp"
#include "test_util.hpp"

using namespace pitrecal;

TEST(Normal, CdfMatchesBoost) {
  const boost::math::normal_distribution<double> nd;
  for (double z = -8.0; z <= 8.0; z += 0.37) {
    const double ref = boost::math::cdf(nd, z);
    EXPECT_NEAR(normal_cdf(z), ref, 1e-15 + 1e-13 * ref) << z;
  }
}

TEST(Normal, QuantileMatchesBoost) {
  const boost::math::normal_distribution<double> nd;
  for (double p : {1e-300, 1e-20, 1e-6, 0.001, 0.025, 0.2, 0.5, 0.7, 0.975, 0.999, 1 - 1e-12}) {
    const double ref = boost::math::quantile(nd, p);
    EXPECT_NEAR(normal_quantile(p), ref, 1e-12 * std::max(1.0, std::abs(ref))) << p;
  }
}

TEST(Normal, QuantileEndpointsAndDomain) {
  EXPECT_EQ(normal_quantile(0.0), -INFINITY);
  EXPECT_EQ(normal_quantile(1.0), INFINITY);
  EXPECT_THROW(normal_quantile(-0.1), DomainError);
  EXPECT_THROW(normal_quantile(1.1), DomainError);
}

TEST(Normal, RoundTrip) {
  for (double z = -6.0; z <= 6.0; z += 0.25) {
    EXPECT_NEAR(normal_quantile(normal_cdf(z)), z, 1e-8) << z;
  }
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, FrozenFirstOutputs) {
  // First output of std::mt19937_64 with its default seed 5489.
  Rng r(5489);
  EXPECT_EQ(r.next_u64(), 14514284786278117030ULL);
  Rng u(5489);
  EXPECT_EQ(u.uniform(), static_cast<double>(14514284786278117030ULL >> 11) * 0x1.0p-53);
}

TEST(Rng, DerivedStreamsDiffer) {
  auto a = Rng::derive(7, "assess", 0);
  auto b = Rng::derive(7, "assess", 1);
  auto c = Rng::derive(7, "kendall", 0);
  auto a2 = Rng::derive(7, "assess", 0);
  const auto va = a.next_u64();
  EXPECT_NE(va, b.next_u64());
  EXPECT_NE(va, c.next_u64());
  EXPECT_EQ(va, a2.next_u64());
}

TEST(Rng, UniformOpenNeverHitsEndpoints) {
  Rng r(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.015);
}

TEST(Rng, NormalDistributionKolmogorov) {
  Rng r(12);
  std::vector<double> z(50000);
  for (auto& v : z) v = r.normal();
  EXPECT_LT(testutil::kolmogorov_distance(z, testutil::phi), 1.63 / std::sqrt(50000.0));
}

TEST(Rng, GammaMeanAndVariance) {
  for (double shape : {0.3, 1.0, 2.5, 9.0}) {
    Rng r(17);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = r.gamma(shape);
      s += g;
      s2 += g * g;
    }
    const double mean = s / n;
    EXPECT_NEAR(mean, shape, 0.02 * std::max(1.0, shape)) << shape;
    EXPECT_NEAR(s2 / n - mean * mean, shape, 0.05 * std::max(1.0, shape)) << shape;
  }
  Rng r(1);
  EXPECT_THROW(r.gamma(0.0), DomainError);
}

TEST(Rng, BetaMeans) {
  Rng r(23);
  const int n = 100000;
  double s25 = 0.0, s52 = 0.0;
  for (int i = 0; i < n; ++i) {
    s25 += r.beta(2, 5);
    s52 += r.beta(5, 2);
  }
  EXPECT_NEAR(s25 / n, 2.0 / 7.0, 0.005);
  EXPECT_NEAR(s52 / n, 5.0 / 7.0, 0.005);
}

TEST(Rng, UniformIndexCoversRange) {
  Rng r(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_THROW(r.uniform_index(0), DomainError);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i;
  r.shuffle(std::span<int>(v));
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(v, sorted);
}

TEST(Hash, KnownSha256Vectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, FileMatchesString) {
  testutil::TempDir dir("hash");
  testutil::write_text(dir / "f.txt", "abc");
  EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
}

TEST(Csv, RoundTripsSeventeenDigits) {
  testutil::TempDir dir("csv");
  RowMatrix m(3, 2);
  m << 0.1, 1.0 / 3.0, -1e-300, 12345678.123456789, std::nextafter(1.0, 2.0), -0.0;
  write_csv(dir / "m.csv", {"a", "b"}, m);
  const auto t = read_csv(dir / "m.csv");
  ASSERT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.values.rows(), 3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) EXPECT_EQ(t.values(r, c), m(r, c));
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, 2.0 / 3.0, 1e-17, 6.02214076e23, -5.5}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Csv, IngestWellFormed) {
  testutil::TempDir dir("ingest");
  testutil::write_text(dir / "d.csv", "x1,y1,y2\n0.5,1,2\n0.25,3,4\n1,5,6\n");
  const auto d = ingest_csv(dir / "d.csv", {1, 2});
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.feature_dim(), 1u);
  EXPECT_EQ(d.response_dim(), 2u);
  EXPECT_EQ(d.y(2, 1), 6.0);
  const auto inferred = ingest_csv(dir / "d.csv");
  EXPECT_EQ(inferred.fingerprint(), d.fingerprint());
}

TEST(Csv, HeaderMismatchNamesMissingColumn) {
  testutil::TempDir dir("schema");
  testutil::write_text(dir / "d.csv", "x1,y1\n0.5,1\n");
  try {
    ingest_csv(dir / "d.csv", {1, 2});
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("y2"), std::string::npos) << e.what();
  }
}

TEST(Csv, NanRowIsCited) {
  testutil::TempDir dir("nan");
  std::string text = "x1,y1\n";
  for (int r = 1; r <= 20; ++r) text += (r == 17 ? "0.5,nan\n" : "0.5,1\n");
  testutil::write_text(dir / "d.csv", text);
  try {
    ingest_csv(dir / "d.csv", {1, 1});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 17"), std::string::npos) << e.what();
    EXPECT_EQ(e.line(), 18u);
  }
}

TEST(Csv, MalformedRowReportsLine) {
  testutil::TempDir dir("bad");
  testutil::write_text(dir / "d.csv", "x1,y1\n1,2\n3\n");
  try {
    read_csv(dir / "d.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  testutil::write_text(dir / "e.csv", "x1,y1\n1,abc\n");
  EXPECT_THROW(read_csv(dir / "e.csv"), ParseError);
}

TEST(Dataset, SubsetAndFingerprint) {
  Dataset d;
  d.x = RowMatrix(3, 1);
  d.x << 1, 2, 3;
  d.y = RowMatrix(3, 1);
  d.y << 4, 5, 6;
  const std::vector<std::size_t> rows{2, 0};
  const auto s = d.subset(rows);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(s.x(0, 0), 3.0);
  EXPECT_EQ(s.y(1, 0), 4.0);
  EXPECT_NE(s.fingerprint(), d.fingerprint());
  Dataset copy = d;
  EXPECT_EQ(copy.fingerprint(), d.fingerprint());
  copy.y(1, 0) = std::nextafter(5.0, 6.0);
  EXPECT_NE(copy.fingerprint(), d.fingerprint());
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(d.subset(bad), ConfigError);
}
