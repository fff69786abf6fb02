#include "pitrecal/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pitrecal/core/csv.hpp"
#include "pitrecal/core/error.hpp"
#include "pitrecal/core/hash.hpp"
#include "pitrecal/core/normal.hpp"

namespace pitrecal {
namespace {

void check_probability(double p, const char* who) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError(std::string(who) + ": probability outside [0, 1]");
  }
}

// Smallest k in 1..m with k / m >= p, evaluated in the same floating-point
// form in which empirical CDF values are produced.
std::size_t order_statistic_rank(double p, std::size_t m) {
  const double md = static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::ceil(p * md));
  k = std::clamp<std::size_t>(k, 1, m);
  while (k > 1 && static_cast<double>(k - 1) / md >= p) --k;
  while (k < m && static_cast<double>(k) / md < p) ++k;
  return k;
}

}  // namespace

GaussianMarginal::GaussianMarginal(ParamFn params, std::string description)
    : params_(std::move(params)), description_(std::move(description)) {}

GaussianMarginal::GaussianMarginal(double mean, double sd)
    : params_([mean, sd](FeatureView) { return NormalParams{mean, sd}; }),
      description_("normal(" + format_double(mean) + "," + format_double(sd) + ")") {
  if (!(sd > 0.0)) throw DomainError("GaussianMarginal: sd must be positive");
}

NormalParams GaussianMarginal::params(FeatureView x) const { return params_(x); }

double GaussianMarginal::cdf(double y, FeatureView x) const {
  const auto [mu, sd] = params_(x);
  return normal_cdf((y - mu) / sd);
}

double GaussianMarginal::quantile(double p, FeatureView x) const {
  check_probability(p, "GaussianMarginal::quantile");
  const auto [mu, sd] = params_(x);
  return mu + sd * normal_quantile(p);
}

double GaussianMarginal::draw(FeatureView x, Rng& rng) const {
  const auto [mu, sd] = params_(x);
  return mu + sd * rng.normal();
}

DiscreteMarginal::DiscreteMarginal(std::vector<double> support, std::vector<double> probabilities)
    : support_(std::move(support)) {
  if (support_.empty() || support_.size() != probabilities.size()) {
    throw DomainError("DiscreteMarginal: support and probabilities must be nonempty and aligned");
  }
  if (!std::is_sorted(support_.begin(), support_.end()) ||
      std::adjacent_find(support_.begin(), support_.end()) != support_.end()) {
    throw DomainError("DiscreteMarginal: support must be strictly increasing");
  }
  double total = 0.0;
  for (double q : probabilities) {
    if (!(q >= 0.0)) throw DomainError("DiscreteMarginal: negative probability");
    total += q;
    cumulative_.push_back(total);
  }
  if (std::fabs(total - 1.0) > 1e-12) throw DomainError("DiscreteMarginal: probabilities must sum to 1");
  cumulative_.back() = 1.0;
}

DiscreteMarginal DiscreteMarginal::bernoulli(double success_probability) {
  return DiscreteMarginal({0.0, 1.0}, {1.0 - success_probability, success_probability});
}

double DiscreteMarginal::cdf(double y, FeatureView) const {
  const auto it = std::upper_bound(support_.begin(), support_.end(), y);
  const auto n = it - support_.begin();
  return n == 0 ? 0.0 : cumulative_[static_cast<std::size_t>(n - 1)];
}

double DiscreteMarginal::cdf_left(double y, FeatureView) const {
  const auto it = std::lower_bound(support_.begin(), support_.end(), y);
  const auto n = it - support_.begin();
  return n == 0 ? 0.0 : cumulative_[static_cast<std::size_t>(n - 1)];
}

double DiscreteMarginal::quantile(double p, FeatureView) const {
  check_probability(p, "DiscreteMarginal::quantile");
  const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), p);
  return support_[static_cast<std::size_t>(it - cumulative_.begin())];
}

std::string DiscreteMarginal::describe() const {
  std::ostringstream os;
  os << "discrete(";
  for (std::size_t i = 0; i < support_.size(); ++i) {
    os << (i ? ";" : "") << format_double(support_[i]) << ":" << format_double(cumulative_[i]);
  }
  os << ")";
  return os.str();
}

EmpiricalMarginal::EmpiricalMarginal(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.empty()) throw DomainError("empty support");
  std::sort(sorted_.begin(), sorted_.end());
}

double EmpiricalMarginal::cdf(double y, FeatureView) const {
  const auto n = std::upper_bound(sorted_.begin(), sorted_.end(), y) - sorted_.begin();
  return static_cast<double>(n) / static_cast<double>(sorted_.size());
}

double EmpiricalMarginal::cdf_left(double y, FeatureView) const {
  const auto n = std::lower_bound(sorted_.begin(), sorted_.end(), y) - sorted_.begin();
  return static_cast<double>(n) / static_cast<double>(sorted_.size());
}

double EmpiricalMarginal::quantile(double p, FeatureView) const {
  check_probability(p, "EmpiricalMarginal::quantile");
  if (p == 0.0) return sorted_.front();
  return sorted_[order_statistic_rank(p, sorted_.size()) - 1];
}

double EmpiricalMarginal::draw(FeatureView, Rng& rng) const {
  return sorted_[rng.uniform_index(sorted_.size())];
}

std::string EmpiricalMarginal::describe() const {
  return "empirical(" + std::to_string(sorted_.size()) + "," + sha256_hex(sorted_) + ")";
}

CdfOnlyMarginal::CdfOnlyMarginal(CdfFn cdf, double lower, double upper, std::string description)
    : cdf_(std::move(cdf)), lower_(lower), upper_(upper), description_(std::move(description)) {
  if (!(lower < upper)) throw DomainError("CdfOnlyMarginal: empty bracket");
}

double CdfOnlyMarginal::quantile(double p, FeatureView x) const {
  check_probability(p, "CdfOnlyMarginal::quantile");
  return bisection_quantile([&](double y) { return cdf_(y, x); }, p, lower_, upper_);
}

std::string PredictiveModel::fingerprint() const { return sha256_hex(describe()); }

IndependentModel::IndependentModel(std::vector<std::shared_ptr<const MarginalCdf>> marginals)
    : marginals_(std::move(marginals)) {
  if (marginals_.empty()) throw ConfigError("IndependentModel: no marginals");
}

const MarginalCdf& IndependentModel::marginal(std::size_t l) const { return *marginals_.at(l); }

RowMatrix IndependentModel::joint_draw(FeatureView x, Rng& rng, std::size_t m) const {
  RowMatrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dim()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (std::size_t l = 0; l < dim(); ++l) {
      out(i, static_cast<Eigen::Index>(l)) = marginals_[l]->draw(x, rng);
    }
  }
  return out;
}

std::string IndependentModel::describe() const {
  std::string s = "independent[";
  for (const auto& m : marginals_) s += m->describe() + "|";
  return s + "]";
}

SampleModel::SampleModel(RowMatrix draws) : draws_(std::move(draws)) {
  if (draws_.rows() == 0 || draws_.cols() == 0) throw DomainError("empty support");
  for (Eigen::Index c = 0; c < draws_.cols(); ++c) {
    std::vector<double> col(draws_.col(c).begin(), draws_.col(c).end());
    marginals_.emplace_back(std::move(col));
  }
  digest_ = sha256_hex(std::span<const double>(draws_.data(), static_cast<std::size_t>(draws_.size())));
}

const MarginalCdf& SampleModel::marginal(std::size_t l) const { return marginals_.at(l); }

RowMatrix SampleModel::joint_draw(FeatureView, Rng& rng, std::size_t m) const {
  RowMatrix out(static_cast<Eigen::Index>(m), draws_.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = draws_.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::size_t>(draws_.rows()))));
  }
  return out;
}

std::string SampleModel::describe() const {
  return "samples(" + std::to_string(draws_.rows()) + "x" + std::to_string(draws_.cols()) + "," +
         digest_ + ")";
}

double empirical_cdf(std::span<const double> samples, double y) {
  if (samples.empty()) throw DomainError("empty support");
  const auto n = std::count_if(samples.begin(), samples.end(), [y](double s) { return s <= y; });
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

double empirical_cdf_left(std::span<const double> samples, double y) {
  if (samples.empty()) throw DomainError("empty support");
  const auto n = std::count_if(samples.begin(), samples.end(), [y](double s) { return s < y; });
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

double empirical_quantile(std::span<const double> samples, double p) {
  if (samples.empty()) throw DomainError("empty support");
  check_probability(p, "empirical_quantile");
  std::vector<double> v(samples.begin(), samples.end());
  if (p == 0.0) return *std::min_element(v.begin(), v.end());
  const auto k = order_statistic_rank(p, v.size()) - 1;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

double bisection_quantile(const std::function<double(double)>& cdf, double p, double lower,
                          double upper) {
  check_probability(p, "bisection_quantile");
  double lo = lower;
  double hi = upper;
  if (cdf(lo) >= p) return lo;
  if (cdf(hi) < p) return hi;
  // Invariant: cdf(lo) < p <= cdf(hi).
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) >= p) hi = mid;
    else lo = mid;
  }
  return hi;
}

double clamp_probability(double p, double eps, ClampTally* tally) {
  if (p < eps || p > 1.0 - eps) {
    if (tally) ++tally->count;
    return std::clamp(p, eps, 1.0 - eps);
  }
  return p;
}

}  // namespace pitrecal

namespace pitrecal {

double clamped_quantile(const MarginalCdf& marginal, double p, FeatureView x, ClampTally* tally) {
  if (marginal.is_continuous()) p = clamp_probability(p, kQuantileClamp, tally);
  return marginal.quantile(p, x);
}

}  // namespace pitrecal
