#include "gridsweep/stats.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "gridsweep/error.hpp"
#include "gridsweep/io.hpp"

namespace gridsweep::stats {

void Sample::validate() const {
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(values[i]))
      throw DomainError(fmt::format("sample '{}' value {} is not finite", label, i));
}

const char* to_string(Family f) { return f == Family::normal ? "normal" : "weibull"; }

const char* to_string(KsMode m) {
  return m == KsMode::asymptotic ? "asymptotic" : "parametric_bootstrap";
}

double FitResult::cdf(double x) const {
  if (family == Family::normal) return 0.5 * std::erfc(-(x - param1) / (param2 * std::numbers::sqrt2));
  if (x <= 0.0) return 0.0;
  return -std::expm1(-std::pow(x / param2, param1));
}

double FitResult::quantile(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw ParameterError(fmt::format("probability {} outside (0, 1)", p));
  if (family == Family::normal)
    return boost::math::quantile(boost::math::normal_distribution<double>(param1, param2), p);
  return param2 * std::pow(-std::log1p(-p), 1.0 / param1);
}

double FitResult::draw(Rng& rng) const {
  if (family == Family::normal) return rng.normal(param1, param2);
  return param2 * std::pow(-std::log(rng.uniform_open0()), 1.0 / param1);
}

double log_likelihood(Family family, double p1, double p2, std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double ll = 0.0;
  if (family == Family::normal) {
    for (double x : values) ll += (x - p1) * (x - p1);
    return -0.5 * n * std::log(2.0 * std::numbers::pi * p2 * p2) - ll / (2.0 * p2 * p2);
  }
  for (double x : values) {
    const double z = x / p2;
    ll += std::log(p1 / p2) + (p1 - 1.0) * std::log(z) - std::pow(z, p1);
  }
  return ll;
}

namespace {

void require_spread(std::span<const double> values, const char* what) {
  if (values.size() < 2) throw DegenerateSample(fmt::format("{}: need at least two values", what));
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) throw DegenerateSample(fmt::format("{}: all {} values equal {}", what, values.size(), *mn));
}

double mean_of(std::span<const double> values) {
  double s = 0.0;
  for (double x : values) s += x;
  return s / static_cast<double>(values.size());
}

}  // namespace

double ecdf_eval(std::span<const double> values, double x) {
  if (values.empty()) throw DegenerateSample("ECDF of an empty sample");
  const auto below = std::count_if(values.begin(), values.end(), [x](double v) { return v <= x; });
  return static_cast<double>(below) / static_cast<double>(values.size());
}

FitResult fit_normal(std::span<const double> values) {
  require_spread(values, "normal fit");
  const double mu = mean_of(values);
  double ss = 0.0;
  for (double x : values) ss += (x - mu) * (x - mu);
  FitResult r;
  r.family = Family::normal;
  r.param1 = mu;
  r.param2 = std::sqrt(ss / static_cast<double>(values.size()));
  r.log_likelihood = log_likelihood(Family::normal, r.param1, r.param2, values);
  r.converged = true;
  return r;
}

FitResult fit_weibull(std::span<const double> values) {
  for (double x : values)
    if (!(x > 0.0)) throw DomainError(fmt::format("Weibull fit needs positive data, got {}", x));
  require_spread(values, "Weibull fit");

  // Work on y = x / max(x) so that y^k never overflows.
  const double scale = *std::max_element(values.begin(), values.end());
  const std::size_t n = values.size();
  std::vector<double> ly(n);
  for (std::size_t i = 0; i < n; ++i) ly[i] = std::log(values[i] / scale);
  const double mean_ly = mean_of(ly);

  // Profile equation g(k) = sum y^k ln y / sum y^k - 1/k - mean ln y, increasing in k.
  auto g = [&](double k, double* dg) {
    double b = 0.0, a = 0.0, c = 0.0;
    for (double l : ly) {
      const double w = std::exp(k * l);
      b += w;
      a += w * l;
      c += w * l * l;
    }
    if (dg) *dg = (c * b - a * a) / (b * b) + 1.0 / (k * k);
    return a / b - 1.0 / k - mean_ly;
  };

  FitResult r;
  r.family = Family::weibull;
  const double mu = mean_of(values);
  double var = 0.0;
  for (double x : values) var += (x - mu) * (x - mu);
  const double cv = std::sqrt(var / static_cast<double>(n)) / mu;
  double k = std::clamp(std::pow(cv, -1.086), 1e-3, 1e3);

  double lo = k, hi = k;
  for (int i = 0; i < 200 && g(lo, nullptr) > 0.0; ++i) lo *= 0.5;
  for (int i = 0; i < 200 && g(hi, nullptr) < 0.0; ++i) hi *= 2.0;
  const bool bracketed = g(lo, nullptr) <= 0.0 && g(hi, nullptr) >= 0.0;

  bool converged = false;
  int it = 0;
  if (bracketed) {
    for (it = 1; it <= 100; ++it) {
      double dg = 0.0;
      const double gk = g(k, &dg);
      if (gk == 0.0) {
        converged = true;
        break;
      }
      (gk < 0.0 ? lo : hi) = k;
      double next = k - gk / dg;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      const double step = std::abs(next - k);
      k = next;
      if (step <= 1e-10 * k) {
        converged = true;
        break;
      }
    }
  }

  double b = 0.0;
  for (double l : ly) b += std::exp(k * l);
  r.param1 = k;
  r.param2 = scale * std::pow(b / static_cast<double>(n), 1.0 / k);
  r.log_likelihood = log_likelihood(Family::weibull, r.param1, r.param2, values);
  r.converged = converged;
  r.iterations = std::min(it, 100);
  return r;
}

double ks_statistic(std::span<const double> values, const std::function<double(double)>& cdf) {
  if (values.empty()) throw DegenerateSample("KS statistic of an empty sample");
  std::vector<double> xs(values.begin(), values.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

double kolmogorov_q(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double kTerm = 1e-12;
  double q;
  if (lambda <= 1.18) {
    // Dual (theta-function) form; the alternating series converges too slowly here.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int j = 1; j < 1000; ++j) {
      const double odd = 2.0 * j - 1.0;
      const double t = std::exp(-odd * odd * pi2 / (8.0 * lambda * lambda));
      s += t;
      if (t < kTerm) break;
    }
    q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s;
  } else {
    double s = 0.0;
    for (int j = 1; j < 1000; ++j) {
      const double t = std::exp(-2.0 * j * j * lambda * lambda);
      s += (j % 2 == 1) ? t : -t;
      if (t < kTerm) break;
    }
    q = 2.0 * s;
  }
  return std::clamp(q, 0.0, 1.0);
}

double ks_asymptotic_p(double d, std::size_t n) {
  if (n == 0) throw DegenerateSample("KS p-value with n = 0");
  const double rn = std::sqrt(static_cast<double>(n));
  return kolmogorov_q((rn + 0.12 + 0.11 / rn) * d);
}

namespace {

FitResult refit(Family family, std::span<const double> values) {
  return family == Family::normal ? fit_normal(values) : fit_weibull(values);
}

}  // namespace

KsOutcome ks_test(std::span<const double> values, const FitResult& fit, const KsOptions& options) {
  if (values.empty()) throw DegenerateSample("KS test of an empty sample");
  if (!fit.converged) throw ParameterError("KS test against a fit that did not converge");
  KsOutcome out;
  out.n = values.size();
  out.mode = options.mode;
  out.d = ks_statistic(values, [&fit](double x) { return fit.cdf(x); });
  if (options.mode == KsMode::asymptotic) {
    out.p_value = ks_asymptotic_p(out.d, out.n);
    return out;
  }

  if (options.n_resamples < 1) throw ParameterError("bootstrap KS needs at least one resample");
  Rng rng(options.seed);
  std::vector<double> sim(values.size());
  int exceed = 0;
  for (int b = 0; b < options.n_resamples; ++b) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw DegenerateSample("bootstrap KS: refits keep failing");
      for (double& x : sim) x = fit.draw(rng);
      try {
        const FitResult f = refit(fit.family, sim);
        if (!f.converged) throw DegenerateSample("refit did not converge");
        const double d = ks_statistic(sim, [&f](double x) { return f.cdf(x); });
        if (d >= out.d) ++exceed;
        break;
      } catch (const std::domain_error&) {
        ++out.failed_refits;
      }
    }
  }
  out.p_value = (1.0 + exceed) / (1.0 + options.n_resamples);
  return out;
}

MomentSummary moment_summary(std::span<const double> values) {
  require_spread(values, "moment summary");
  MomentSummary s;
  s.mean = mean_of(values);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : values) {
    const double d = x - s.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(values.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  s.variance = m2;
  s.g1 = m3 / std::pow(m2, 1.5);
  s.beta2 = m4 / (m2 * m2);
  return s;
}

PearsonPoint weibull_locus(double k) {
  if (!(k > 0.0)) throw DomainError(fmt::format("Weibull shape must be positive, got {}", k));
  const double m1 = std::tgamma(1.0 + 1.0 / k);
  const double m2 = std::tgamma(1.0 + 2.0 / k);
  const double m3 = std::tgamma(1.0 + 3.0 / k);
  const double m4 = std::tgamma(1.0 + 4.0 / k);
  const double var = m2 - m1 * m1;
  const double mu3 = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
  const double mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
  return {mu3 * mu3 / (var * var * var), mu4 / (var * var)};
}

BootstrapCloud bootstrap_cloud(std::span<const double> values, int n_resamples, std::uint64_t seed) {
  require_spread(values, "bootstrap");
  if (n_resamples < 1) throw ParameterError("bootstrap needs at least one resample");
  BootstrapCloud cloud;
  cloud.n_resamples = n_resamples;
  cloud.seed = seed;
  Rng rng(seed);
  std::vector<double> re(values.size());
  while (static_cast<int>(cloud.points.size()) < n_resamples) {
    for (double& x : re) x = values[rng.index(values.size())];
    if (std::all_of(re.begin(), re.end(), [&re](double x) { return x == re.front(); })) {
      ++cloud.redrawn;
      continue;
    }
    const MomentSummary m = moment_summary(re);
    cloud.points.push_back({m.beta1(), m.beta2});
    cloud.means.push_back(m.mean);
  }
  return cloud;
}

std::vector<QqPoint> qq_points(std::span<const double> values, const FitResult& fit) {
  if (!fit.converged) throw ParameterError("QQ points against a fit that did not converge");
  if (values.size() < 2) throw DegenerateSample("QQ points need at least two values");
  std::vector<double> xs(values.begin(), values.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  std::vector<QqPoint> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out.push_back({fit.quantile((static_cast<double>(i) + 0.5) / n), xs[i]});
  return out;
}

Sample read_sample_csv(std::istream& in, std::string label) {
  const io::CsvTable t = io::read_csv(in);
  Sample s;
  s.label = std::move(label);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    s.values.push_back(io::parse_double(t.rows[r].at(0), "value", static_cast<int>(r) + 2));
  s.validate();
  return s;
}

void write_sample_csv(std::ostream& out, const Sample& sample) {
  io::CsvWriter w(out, {"value"});
  for (double x : sample.values) w.row({io::format_double(x)});
}

void write_fit_csv(std::ostream& out, const std::vector<FitReportRow>& rows) {
  io::CsvWriter w(out, {"label", "family", "param1", "param2", "loglik", "ks_d", "ks_p", "mode"});
  for (const auto& r : rows)
    w.row({r.label, to_string(r.fit.family), io::format_double(r.fit.param1),
           io::format_double(r.fit.param2), io::format_double(r.fit.log_likelihood),
           io::format_double(r.ks.d), io::format_double(r.ks.p_value), to_string(r.ks.mode)});
}

void write_cloud_csv(std::ostream& out, const BootstrapCloud& cloud) {
  io::CsvWriter w(out, {"beta1", "beta2"});
  for (const auto& p : cloud.points) w.row({io::format_double(p.beta1), io::format_double(p.beta2)});
}

void write_qq_csv(std::ostream& out, const std::vector<QqPoint>& points) {
  io::CsvWriter w(out, {"theoretical", "empirical"});
  for (const auto& p : points) w.row({io::format_double(p.theoretical), io::format_double(p.empirical)});
}

}  // namespace gridsweep::stats
