#include "pitrecal/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/core/normal.hpp"
#include "pitrecal/knn.hpp"
#include "pitrecal/pit.hpp"

namespace pitrecal {

void gumbel_copula_exponents(double tau, Rng& rng, double& r1, double& r2) {
  if (!(tau >= 0.0 && tau < 1.0)) throw DomainError("Gumbel copula: tau must lie in [0, 1)");
  if (tau == 0.0) {
    r1 = rng.exponential();
    r2 = rng.exponential();
    return;
  }
  const double alpha = 1.0 - tau;  // 1 / theta
  const double theta_u = std::numbers::pi * rng.uniform_open();
  const double w = rng.exponential();
  // Positive stable S with Laplace transform exp(-t^alpha).
  const double log_s = std::log(std::sin(alpha * theta_u)) - std::log(std::sin(theta_u)) / alpha +
                       (1.0 - alpha) / alpha * (std::log(std::sin((1.0 - alpha) * theta_u)) - std::log(w));
  const double e1 = rng.exponential();
  const double e2 = rng.exponential();
  r1 = std::exp(alpha * (std::log(e1) - log_s));
  r2 = std::exp(alpha * (std::log(e2) - log_s));
}

RowMatrix gumbel_copula_sample(double tau, std::size_t n, Rng& rng) {
  RowMatrix u(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    double r1 = 0.0, r2 = 0.0;
    gumbel_copula_exponents(tau, rng, r1, r2);
    u(i, 0) = std::exp(-r1);
    u(i, 1) = std::exp(-r2);
  }
  return u;
}

namespace {

// Phi^{-1}(exp(-r)) without forming 1 - u in the upper tail.
double normal_score_from_exponent(double r) {
  if (r < std::log(2.0)) return -normal_quantile(-std::expm1(-r));
  return normal_quantile(std::exp(-r));
}

std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                          std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

template <typename Eq>
std::uint64_t tied_pairs(std::span<const std::size_t> order, Eq eq) {
  std::uint64_t ties = 0, run = 1;
  for (std::size_t i = 1; i <= order.size(); ++i) {
    if (i < order.size() && eq(order[i - 1], order[i])) {
      ++run;
    } else {
      ties += run * (run - 1) / 2;
      run = 1;
    }
  }
  return ties;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("kendall_tau: need two aligned samples of size >= 2");
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });
  const std::uint64_t ties_a = tied_pairs(order, [&](std::size_t i, std::size_t j) { return a[i] == a[j]; });
  const std::uint64_t ties_ab =
      tied_pairs(order, [&](std::size_t i, std::size_t j) { return a[i] == a[j] && b[i] == b[j]; });
  std::vector<double> v(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = b[order[i]];
  const std::uint64_t discordant = merge_count(v, buf, 0, n);
  std::vector<std::size_t> sorted_b(n);
  std::iota(sorted_b.begin(), sorted_b.end(), std::size_t{0});
  std::span<const double> bv(v);
  const std::uint64_t ties_b = tied_pairs(sorted_b, [&](std::size_t i, std::size_t j) { return bv[i] == bv[j]; });
  const double total = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double diff = total - static_cast<double>(ties_a) - static_cast<double>(ties_b) +
                      static_cast<double>(ties_ab) - 2.0 * static_cast<double>(discordant);
  return diff / total;
}

CopulaScenario CopulaScenario::parse(const std::string& code) {
  if (code.size() != 3) throw ConfigError("scenario code must have three letters T/F, got '" + code + "'");
  CopulaScenario s;
  bool* flags[3] = {&s.margin1_ok, &s.margin2_ok, &s.copula_ok};
  for (std::size_t i = 0; i < 3; ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(code[i])));
    if (c != 'T' && c != 'F') throw ConfigError("scenario code must have three letters T/F, got '" + code + "'");
    *flags[i] = c == 'T';
  }
  return s;
}

std::vector<std::string> CopulaScenario::all_codes() {
  return {"TTT", "FTT", "TFT", "TTF", "FFT", "FTF", "TFF", "FFF"};
}

std::string CopulaScenario::code() const {
  std::string c;
  c += margin1_ok ? 'T' : 'F';
  c += margin2_ok ? 'T' : 'F';
  c += copula_ok ? 'T' : 'F';
  return c;
}

CopulaParams CopulaScenario::truth(FeatureView x) {
  if (x.size() < 2) throw ConfigError("copula scenario needs two covariates");
  if (!(x[1] > 0.0)) throw DomainError("copula scenario: x2 must be positive");
  return {2.0 - x[0], 1.0, 0.0, 1.0 / x[1], 0.5 * (x[0] + x[1])};
}

CopulaParams CopulaScenario::forecast(FeatureView x) const {
  CopulaParams p = truth(x);
  if (!margin1_ok) p.mu1 *= 0.8;
  if (!margin2_ok) p.var2 *= 0.8;
  if (!copula_ok) p.tau *= 0.6;
  return p;
}

GaussianGumbelModel::GaussianGumbelModel(ParamFn params, std::string description)
    : params_(std::move(params)),
      description_(std::move(description)),
      m1_([f = params_](FeatureView x) {
            const CopulaParams p = f(x);
            return NormalParams{p.mu1, std::sqrt(p.var1)};
          },
          description_ + "/margin1"),
      m2_([f = params_](FeatureView x) {
            const CopulaParams p = f(x);
            return NormalParams{p.mu2, std::sqrt(p.var2)};
          },
          description_ + "/margin2") {}

std::shared_ptr<const GaussianGumbelModel> GaussianGumbelModel::truth() {
  return std::make_shared<const GaussianGumbelModel>(&CopulaScenario::truth, "gaussian-gumbel:TTT");
}

std::shared_ptr<const GaussianGumbelModel> GaussianGumbelModel::forecast(const CopulaScenario& scenario) {
  return std::make_shared<const GaussianGumbelModel>(
      [scenario](FeatureView x) { return scenario.forecast(x); }, "gaussian-gumbel:" + scenario.code());
}

const MarginalCdf& GaussianGumbelModel::marginal(std::size_t l) const {
  if (l == 0) return m1_;
  if (l == 1) return m2_;
  throw ConfigError("GaussianGumbelModel: margin index out of range");
}

RowMatrix GaussianGumbelModel::joint_draw(FeatureView x, Rng& rng, std::size_t m) const {
  const CopulaParams p = params_(x);
  const double sd1 = std::sqrt(p.var1), sd2 = std::sqrt(p.var2);
  RowMatrix out(static_cast<Eigen::Index>(m), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    double r1 = 0.0, r2 = 0.0;
    gumbel_copula_exponents(p.tau, rng, r1, r2);
    out(i, 0) = p.mu1 + sd1 * normal_score_from_exponent(r1);
    out(i, 1) = p.mu2 + sd2 * normal_score_from_exponent(r2);
  }
  return out;
}

namespace {

Dataset draw_copula_data(const GaussianGumbelModel& truth, std::size_t n, Rng& rng) {
  Dataset d{RowMatrix(static_cast<Eigen::Index>(n), 2), RowMatrix(static_cast<Eigen::Index>(n), 2)};
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    d.x(i, 0) = rng.beta(2.0, 5.0);
    d.x(i, 1) = rng.beta(5.0, 2.0);
    d.y.row(i) = truth.joint_draw(row_view(d.x, i), rng, 1).row(0);
  }
  return d;
}

}  // namespace

ScenarioData scenario_dataset(const CopulaScenario& scenario, std::uint64_t seed) {
  if (scenario.n_val == 0 || scenario.n_test == 0) throw ConfigError("copula scenario: empty split");
  ScenarioData out;
  out.scenario = scenario;
  out.truth = GaussianGumbelModel::truth();
  out.forecast = GaussianGumbelModel::forecast(scenario);
  Rng val_rng = Rng::derive(seed, "copula-validation");
  Rng test_rng = Rng::derive(seed, "copula-test");
  out.validation = draw_copula_data(*out.truth, scenario.n_val, val_rng);
  out.test = draw_copula_data(*out.truth, scenario.n_test, test_rng);
  return out;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 3) throw DomainError("fit_linear: need at least 3 aligned points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_linear: constant regressor");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    rss += r * r;
  }
  f.variance = rss / static_cast<double>(n - 2);
  return f;
}

namespace {

Dataset draw_twisted(std::size_t n, Rng& rng) {
  Dataset d{RowMatrix(static_cast<Eigen::Index>(n), 1), RowMatrix(static_cast<Eigen::Index>(n), 2)};
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) {
    const double x = rng.normal();
    const double y1 = rng.normal();
    d.x(i, 0) = x;
    d.y(i, 0) = y1;
    d.y(i, 1) = y1 + x * y1 * y1;
  }
  return d;
}

}  // namespace

TwistedData twisted_dataset(const TwistedScenario& scenario, std::uint64_t seed) {
  TwistedData out;
  Rng train_rng = Rng::derive(seed, "twisted-train");
  Rng val_rng = Rng::derive(seed, "twisted-validation");
  Rng test_rng = Rng::derive(seed, "twisted-test");
  out.train = draw_twisted(scenario.n_train, train_rng);
  out.validation = draw_twisted(scenario.n_val, val_rng);
  out.test = draw_twisted(scenario.n_test, test_rng);

  std::vector<double> xs(out.train.x.data(), out.train.x.data() + out.train.x.size());
  std::vector<std::shared_ptr<const MarginalCdf>> margins;
  for (int l = 0; l < 2; ++l) {
    std::vector<double> ys(out.train.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = out.train.response(i)[static_cast<std::size_t>(l)];
    const LinearFit f = fit_linear(xs, ys);
    out.fits[l] = f;
    const double sd = std::sqrt(f.variance);
    margins.push_back(std::make_shared<GaussianMarginal>(
        [f, sd](FeatureView x) { return NormalParams{f.intercept + f.slope * x[0], sd}; },
        "linear-gaussian(" + format_double(f.intercept) + "," + format_double(f.slope) + "," +
            format_double(sd) + ")"));
  }
  out.model = std::make_shared<const IndependentModel>(std::move(margins));
  return out;
}

double twisted_y2_cdf(double t, double x) {
  if (x == 0.0) return normal_cdf(t);
  // y + x y^2 <= t between (x > 0) or outside (x < 0) the roots.
  const double disc = 1.0 + 4.0 * x * t;
  if (disc < 0.0) return x > 0.0 ? 0.0 : 1.0;
  const double s = std::sqrt(disc);
  const double r_lo = std::min((-1.0 - s) / (2.0 * x), (-1.0 + s) / (2.0 * x));
  const double r_hi = std::max((-1.0 - s) / (2.0 * x), (-1.0 + s) / (2.0 * x));
  const double inside = normal_cdf(r_hi) - normal_cdf(r_lo);
  return x > 0.0 ? inside : 1.0 - inside;
}

RowMatrix twisted_truth_draw(double x, std::size_t n, Rng& rng) {
  RowMatrix out(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double y1 = rng.normal();
    out(i, 0) = y1;
    out(i, 1) = y1 + x * y1 * y1;
  }
  return out;
}

std::size_t RollingSeries::change_row() const {
  // Row i holds time t = i + 1.
  return config.change_point >= 1 ? config.change_point - 1 : 0;
}

RollingSeries rolling_series_demo(const RollingConfig& config, std::uint64_t seed) {
  if (config.length < 300) throw ConfigError("rolling series: length must be at least 300");
  if (config.change_point == 0 || config.change_point >= config.length) {
    throw ConfigError("rolling series: change point must fall inside the series");
  }
  if (config.dim == 0) throw ConfigError("rolling series: dimension must be positive");
  if (!(config.rho >= 0.0 && config.rho < 1.0)) throw ConfigError("rolling series: rho must lie in [0, 1)");
  if (!(std::fabs(config.phi) < 1.0)) throw ConfigError("rolling series: |phi| must be below 1");
  if (!(config.scale > 0.0)) throw ConfigError("rolling series: scale must be positive");

  RollingSeries out;
  out.config = config;
  const std::size_t d = config.dim;
  const auto di = static_cast<Eigen::Index>(d);
  Rng rng = Rng::derive(seed, "rolling-series");
  RowMatrix y(static_cast<Eigen::Index>(config.length), di);
  const double stationary_sd = 1.0 / std::sqrt(1.0 - config.phi * config.phi);
  const double a = std::sqrt(config.rho), b = std::sqrt(1.0 - config.rho);
  for (std::size_t t = 0; t < config.length; ++t) {
    // Equicorrelated innovations: common factor plus idiosyncratic part.
    const double common = rng.normal();
    for (std::size_t l = 0; l < d; ++l) {
      const double e = a * common + b * rng.normal();
      const auto ti = static_cast<Eigen::Index>(t);
      const auto li = static_cast<Eigen::Index>(l);
      if (t == 0) {
        y(ti, li) = stationary_sd * e;
      } else if (t < config.change_point) {
        y(ti, li) = config.phi * y(ti - 1, li) + e;
      } else {
        y(ti, li) = config.phi * y(ti - 1, li) + config.bias + config.scale * e;
      }
    }
  }
  const auto rows = static_cast<Eigen::Index>(config.length - 1);
  out.data.x = y.topRows(rows);
  out.data.y = y.bottomRows(rows);
  out.times.resize(config.length - 1);
  std::iota(out.times.begin(), out.times.end(), 1.0);

  std::vector<std::shared_ptr<const MarginalCdf>> margins;
  const double phi = config.phi;
  for (std::size_t l = 0; l < d; ++l) {
    margins.push_back(std::make_shared<GaussianMarginal>(
        [phi, l](FeatureView x) { return NormalParams{phi * x[l], 1.0}; },
        "ar1-gaussian(phi=" + format_double(phi) + ",margin=" + std::to_string(l + 1) + ")"));
  }
  out.forecast = std::make_shared<const IndependentModel>(std::move(margins));
  return out;
}

RollingCoverage rolling_coverage(const RollingSeries& series, std::size_t k, std::size_t steps,
                                 double level, std::uint64_t pit_seed) {
  const std::size_t n = series.data.size();
  if (steps == 0 || steps > n) throw ConfigError("rolling coverage: steps out of range");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("rolling coverage: level must lie in (0, 1)");
  const PitMatrix pit = pit_matrix(*series.forecast, series.data, pit_seed);
  const NeighborIndex index = NeighborIndex::rolling(series.data, series.times);
  const double lo_p = 0.5 * (1.0 - level), hi_p = 1.0 - lo_p;
  const std::size_t d = series.data.response_dim();
  std::size_t base_hits = 0, knn_hits = 0;
  for (std::size_t i = n - steps; i < n; ++i) {
    const FeatureView x = series.data.features(i);
    const FeatureView y = series.data.response(i);
    const RowMatrix sample = knn_recalibrated_sample(*series.forecast, pit, index, x, k, series.times[i]);
    for (std::size_t l = 0; l < d; ++l) {
      const MarginalCdf& f = series.forecast->marginal(l);
      if (y[l] >= f.quantile(lo_p, x) && y[l] <= f.quantile(hi_p, x)) ++base_hits;
      std::vector<double> col(static_cast<std::size_t>(sample.rows()));
      for (Eigen::Index r = 0; r < sample.rows(); ++r) col[static_cast<std::size_t>(r)] = sample(r, static_cast<Eigen::Index>(l));
      if (y[l] >= empirical_quantile(col, lo_p) && y[l] <= empirical_quantile(col, hi_p)) ++knn_hits;
    }
  }
  const double total = static_cast<double>(steps * d);
  return {static_cast<double>(base_hits) / total, static_cast<double>(knn_hits) / total, steps};
}

}  // namespace pitrecal
