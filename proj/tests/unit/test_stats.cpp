#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gridsweep/error.hpp"
#include "gridsweep/rng.hpp"
#include "gridsweep/stats.hpp"

using namespace gridsweep;
using namespace gridsweep::stats;

namespace {

std::vector<double> normal_draws(std::size_t n, double mu, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal(mu, sd);
  return v;
}

std::vector<double> weibull_draws(std::size_t n, double k, double lambda, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = lambda * std::pow(-std::log(rng.uniform_open0()), 1.0 / k);
  return v;
}

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Skewness of Weibull(k) from the gamma moments, written out independently.
double weibull_skew(double k) {
  const double g1 = std::tgamma(1 + 1 / k), g2 = std::tgamma(1 + 2 / k), g3 = std::tgamma(1 + 3 / k);
  return (g3 - 3 * g1 * g2 + 2 * g1 * g1 * g1) / std::pow(g2 - g1 * g1, 1.5);
}

bool pearson_ok(const PearsonPoint& p) { return p.beta2 >= p.beta1 + 1.0 - 1e-12 * std::max(1.0, p.beta2); }

}  // namespace

TEST_CASE("ecdf") {
  const std::vector<double> s{1, 2, 3};
  CHECK(ecdf_eval(s, 2.0) == doctest::Approx(2.0 / 3.0));
  CHECK(ecdf_eval(s, 0.5) == 0.0);
  CHECK(ecdf_eval(s, 3.0) == 1.0);
  CHECK(ecdf_eval(s, 99.0) == 1.0);
  CHECK(ecdf_eval(std::vector<double>{1, 1, 2}, 1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(ecdf_eval(std::vector<double>{3, 1, 2}, 1.5) == doctest::Approx(1.0 / 3.0));  // order does not matter
  CHECK_THROWS_AS(ecdf_eval(std::vector<double>{}, 0.0), DegenerateSample);
}

TEST_CASE("sample validation") {
  Sample s{{1.0, std::nan("")}, "x"};
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.values = {1.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(s.validate(), DomainError);
  s.values = {1.0, 2.0};
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("normal fit") {
  const auto f = fit_normal(std::vector<double>{0, 2});
  CHECK(f.param1 == 1.0);
  CHECK(f.param2 == 1.0);
  CHECK(f.converged);
  CHECK_THROWS_AS(fit_normal(std::vector<double>{5, 5, 5}), DegenerateSample);
  CHECK_THROWS_AS(fit_normal(std::vector<double>{5}), DegenerateSample);

  const auto v = normal_draws(10000, 2.25, 0.76, 1);
  const auto g = fit_normal(v);
  CHECK(std::abs(g.param1 - 2.25) < 0.03);
  CHECK(std::abs(g.param2 - 0.76) < 0.03);
  CHECK(g.log_likelihood == doctest::Approx(log_likelihood(Family::normal, g.param1, g.param2, v)));

  // Translation moves mu only; negation flips it.
  std::vector<double> shifted = v, negated = v;
  for (auto& x : shifted) x += 10.0;
  for (auto& x : negated) x = -x;
  CHECK(fit_normal(shifted).param1 == doctest::Approx(g.param1 + 10.0).epsilon(1e-12));
  CHECK(fit_normal(shifted).param2 == doctest::Approx(g.param2).epsilon(1e-9));
  CHECK(fit_normal(negated).param1 == doctest::Approx(-g.param1).epsilon(1e-12));
  CHECK(fit_normal(negated).param2 == doctest::Approx(g.param2).epsilon(1e-12));
}

TEST_CASE("weibull fit recovers the shape") {
  for (double k : {1.0, 2.0, 4.0}) {
    CAPTURE(k);
    const auto v = weibull_draws(10000, k, 1.0, 17);
    const auto f = fit_weibull(v);
    CHECK(f.converged);
    CHECK(f.iterations <= 100);
    CHECK(std::abs(f.param1 / k - 1.0) < 0.05);
    CHECK(std::abs(f.param2 - 1.0) < 0.05);
  }
  const auto expo = fit_weibull(weibull_draws(10000, 1.0, 1.0, 3));
  CHECK(expo.param1 >= 0.95);
  CHECK(expo.param1 <= 1.05);

  CHECK_THROWS_AS(fit_weibull(std::vector<double>{0.0, 1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(fit_weibull(std::vector<double>{-1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(fit_weibull(std::vector<double>{2.0, 2.0}), DegenerateSample);
}

TEST_CASE("weibull fit is scale equivariant and optimal") {
  const auto v = weibull_draws(500, 1.7, 3.0, 5);
  const auto f = fit_weibull(v);
  std::vector<double> scaled = v;
  for (auto& x : scaled) x *= 1e-4;
  const auto g = fit_weibull(scaled);
  CHECK(g.param1 == doctest::Approx(f.param1).epsilon(1e-8));
  CHECK(g.param2 == doctest::Approx(f.param2 * 1e-4).epsilon(1e-8));

  // No nearby parameter pair does better.
  for (double dk : {-0.01, 0.0, 0.01})
    for (double dl : {-0.01, 0.0, 0.01}) {
      if (dk == 0.0 && dl == 0.0) continue;
      CHECK(log_likelihood(Family::weibull, f.param1 * (1 + dk), f.param2 * (1 + dl), v) < f.log_likelihood);
    }
  const auto n = fit_normal(v);
  for (double d : {-0.01, 0.01}) {
    CHECK(log_likelihood(Family::normal, n.param1 + d, n.param2, v) < n.log_likelihood);
    CHECK(log_likelihood(Family::normal, n.param1, n.param2 * (1 + d), v) < n.log_likelihood);
  }

  // Two distinct points: a valid (if extreme) fit.
  const auto two = fit_weibull(std::vector<double>{1.0, 2.0});
  CHECK(two.param1 > 0.0);
  CHECK(two.param2 > 0.0);
}

TEST_CASE("fitted laws: cdf, quantile, draw") {
  const FitResult w{Family::weibull, 2.0, 3.0, 0.0, true, 0};
  CHECK(w.cdf(3.0) == doctest::Approx(1.0 - std::exp(-1.0)));
  CHECK(w.cdf(-1.0) == 0.0);
  const FitResult n{Family::normal, 1.0, 2.0, 0.0, true, 0};
  CHECK(n.cdf(1.0) == doctest::Approx(0.5));
  for (double p : {0.01, 0.3, 0.5, 0.9, 0.999}) {
    CHECK(w.cdf(w.quantile(p)) == doctest::Approx(p).epsilon(1e-12));
    CHECK(n.cdf(n.quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
  Rng rng(4);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) sum += n.draw(rng);
  CHECK(sum / 100000 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("KS statistic") {
  auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
  CHECK(ks_statistic(std::vector<double>{0.5}, uniform) == 0.5);
  CHECK(ks_statistic(std::vector<double>{0.25, 0.75}, uniform) == doctest::Approx(0.25));
  CHECK_THROWS_AS(ks_statistic(std::vector<double>{}, uniform), DegenerateSample);

  // Brute-force supremum over a dense grid plus both sides of every jump.
  const auto v = normal_draws(200, 0.0, 1.0, 99);
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  auto ecdf = [&](double x) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / 200.0;
  };
  std::vector<double> grid;
  const double lo = sorted.front() - 1.0, hi = sorted.back() + 1.0;
  for (int i = 0; i < 1000000; ++i) grid.push_back(lo + (hi - lo) * i / 999999.0);
  for (double x : sorted) {
    grid.push_back(x);
    grid.push_back(std::nextafter(x, -std::numeric_limits<double>::infinity()));
  }
  double sup = 0.0;
  for (double x : grid) sup = std::max(sup, std::abs(ecdf(x) - phi(x)));
  CHECK(std::abs(ks_statistic(v, phi) - sup) < 1e-9);
}

TEST_CASE("Kolmogorov distribution") {
  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(ks_asymptotic_p(0.0, 50) == 1.0);
  CHECK(kolmogorov_q(10.0) < 1e-80);
  // Direct series with many terms converges wherever lambda is not tiny.
  for (double lambda : {0.2, 0.4, 0.8, 1.0, 1.18, 1.19, 1.5, 2.0, 3.0}) {
    double q = 0.0;
    for (int j = 1; j < 20000; ++j) q += 2.0 * (j % 2 ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    CAPTURE(lambda);
    CHECK(std::abs(kolmogorov_q(lambda) - q) < 1e-10);
  }
  CHECK(kolmogorov_q(1.3580986) == doctest::Approx(0.05).epsilon(1e-5));  // classic 5% point

  double prev = 1.0;
  for (int i = 0; i <= 200000; ++i) {
    const double q = kolmogorov_q(i * 2e-5 * 3.0);
    REQUIRE(q <= prev);
    REQUIRE(q >= 0.0);
    prev = q;
  }
  // Small-sample lambda correction.
  const double d = 0.1;
  const std::size_t n = 100;
  CHECK(ks_asymptotic_p(d, n) == doctest::Approx(kolmogorov_q((10.0 + 0.12 + 0.011) * d)));
  CHECK(ks_asymptotic_p(0.2, n) < ks_asymptotic_p(0.1, n));
}

TEST_CASE("KS test modes") {
  const auto v = weibull_draws(300, 1.0, 1.0, 8);
  const auto fn = fit_normal(v);
  const auto fw = fit_weibull(v);
  for (const auto* f : {&fn, &fw}) {
    const auto a = ks_test(v, *f);
    CHECK(a.mode == KsMode::asymptotic);
    CHECK(a.n == 300);
    CHECK(a.d >= 0.0);
    CHECK(a.d <= 1.0);
    CHECK(a.p_value >= 0.0);
    CHECK(a.p_value <= 1.0);
    const KsOptions opt{KsMode::parametric_bootstrap, 199, 5};
    const auto b = ks_test(v, *f, opt);
    CHECK(b.d == a.d);
    CHECK(b.p_value >= 1.0 / 200.0);
    CHECK(b.p_value <= 1.0);
    const auto again = ks_test(v, *f, opt);
    CHECK(again.p_value == b.p_value);
  }
  // Exponential data are plainly not normal.
  CHECK(ks_test(v, fn, {KsMode::parametric_bootstrap, 199, 1}).p_value < 0.05);
  CHECK_THROWS_AS(ks_test(std::vector<double>{}, fn), DegenerateSample);
}

TEST_CASE("moment summary") {
  const auto two = moment_summary(std::vector<double>{-1, 1});
  CHECK(two.g1 == 0.0);
  CHECK(two.beta2 == 1.0);
  CHECK(two.beta1() == 0.0);
  CHECK(two.variance == 1.0);
  CHECK_THROWS_AS(moment_summary(std::vector<double>{3, 3}), DegenerateSample);

  const auto n = moment_summary(normal_draws(100000, 0.0, 1.0, 21));
  CHECK(n.beta2 >= 2.9);
  CHECK(n.beta2 <= 3.1);
  CHECK(n.beta1() < 0.01);
  CHECK(std::hypot(n.beta1(), n.beta2 - 3.0) < 0.15);

  const auto e = moment_summary(weibull_draws(100000, 1.0, 1.0, 22));
  CHECK(e.g1 == doctest::Approx(2.0).epsilon(0.05));
  CHECK(e.beta2 == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("Pearson inequality holds for arbitrary samples") {
  Rng rng(31);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng.index(12);
    std::vector<double> v(n);
    for (auto& x : v) x = std::floor(rng.exponential(0.3)) * (rng.uniform() < 0.5 ? 1 : -1);
    if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) continue;
    const auto m = moment_summary(v);
    CHECK(m.variance >= 0.0);
    CHECK(pearson_ok({m.beta1(), m.beta2}));
  }
}

TEST_CASE("weibull locus") {
  const auto one = weibull_locus(1.0);
  CHECK(one.beta1 == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(one.beta2 == doctest::Approx(9.0).epsilon(1e-12));
  CHECK_THROWS_AS(weibull_locus(0.0), DomainError);
  CHECK_THROWS_AS(weibull_locus(-2.0), DomainError);

  double lo = 2.0, hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (weibull_skew(mid) > 0 ? lo : hi) = mid;
  }
  CHECK(lo == doctest::Approx(3.60).epsilon(0.005));
  CHECK(weibull_locus(lo).beta1 < 1e-12);

  const auto mc = moment_summary(weibull_draws(1000000, 2.0, 1.0, 77));
  const auto two = weibull_locus(2.0);
  CHECK(mc.beta1() == doctest::Approx(two.beta1).epsilon(0.02));
  CHECK(mc.beta2 == doctest::Approx(two.beta2).epsilon(0.02));

  for (double k = 0.5; k < 30; k *= 1.1) CHECK(pearson_ok(weibull_locus(k)));
}

TEST_CASE("bootstrap cloud") {
  const std::vector<double> outlier{1, 1, 1, 1, 9};
  const auto a = bootstrap_cloud(outlier, 1, 3);
  const auto b = bootstrap_cloud(outlier, 1, 3);
  REQUIRE(a.points.size() == 1);
  CHECK(a.points[0].beta1 == b.points[0].beta1);
  CHECK(a.points[0].beta2 == b.points[0].beta2);
  CHECK(a.redrawn == b.redrawn);
  const auto many = bootstrap_cloud(outlier, 500, 3);
  CHECK(many.redrawn > 0);  // (4/5)^5 of resamples miss the outlier
  for (const auto& p : many.points) CHECK(pearson_ok(p));
  CHECK_THROWS_AS(bootstrap_cloud(std::vector<double>{2, 2}, 10, 1), DegenerateSample);
  CHECK_THROWS_AS(bootstrap_cloud(outlier, 0, 1), ParameterError);

  const auto v = normal_draws(500, 3.0, 2.0, 12);
  const auto cloud = bootstrap_cloud(v, 2000, 4);
  REQUIRE(cloud.means.size() == 2000);
  const auto m = moment_summary(v);
  const double grand = std::accumulate(cloud.means.begin(), cloud.means.end(), 0.0) / 2000.0;
  CHECK(std::abs(grand - m.mean) < 3.0 * std::sqrt(m.variance) / std::sqrt(500.0 * 2000.0));

  const auto big = bootstrap_cloud(normal_draws(10000, 0.0, 1.0, 13), 1000, 5);
  const auto inside = std::count_if(big.points.begin(), big.points.end(), [](const auto& p) { return p.beta1 < 0.05; });
  CHECK(inside >= 950);
  for (const auto& p : big.points) CHECK(pearson_ok(p));
}

TEST_CASE("QQ points") {
  const std::vector<double> v{3, 1, 2, 5};
  const auto f = fit_normal(v);
  const auto q = qq_points(v, f);
  REQUIRE(q.size() == 4);
  const std::vector<double> sorted{1, 2, 3, 5};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(q[i].empirical == sorted[i]);
    CHECK(q[i].theoretical == doctest::Approx(f.quantile((i + 0.5) / 4.0)));
    if (i) CHECK(q[i].theoretical > q[i - 1].theoretical);
  }
  // A perfect sample lies on the diagonal.
  const FitResult w{Family::weibull, 2.0, 1.0, 0.0, true, 0};
  std::vector<double> exact;
  for (int i = 1; i <= 50; ++i) exact.push_back(w.quantile((i - 0.5) / 50.0));
  for (const auto& p : qq_points(exact, w)) CHECK(p.theoretical == doctest::Approx(p.empirical).epsilon(1e-12));
}

TEST_CASE("CSV") {
  const Sample s{{0.1, 2.5e-7, 3.0}, "c_unk"};
  std::ostringstream out;
  write_sample_csv(out, s);
  CHECK(out.str().starts_with("value\n"));
  std::istringstream in(out.str());
  const auto back = read_sample_csv(in, "c_unk");
  CHECK(back.values == s.values);
  CHECK(back.label == "c_unk");

  std::ostringstream fits;
  const auto f = fit_normal(s.values);
  write_fit_csv(fits, {{"c_unk", f, ks_test(s.values, f)}});
  CHECK(fits.str().starts_with("label,family,param1,param2,loglik,ks_d,ks_p,mode\n"));
  CHECK(fits.str().find("c_unk,normal,") != std::string::npos);

  std::ostringstream cloud, qq;
  write_cloud_csv(cloud, bootstrap_cloud(s.values, 3, 1));
  write_qq_csv(qq, qq_points(s.values, f));
  const std::string cloud_text = cloud.str();
  CHECK(std::count(cloud_text.begin(), cloud_text.end(), '\n') == 4);
  CHECK(qq.str().starts_with("theoretical,empirical\n"));

  std::istringstream bad("value\n1.0\nfoo\n");
  CHECK_THROWS_AS(read_sample_csv(bad, "x"), ParseError);
}

TEST_CASE("invariants") {
  const auto v = weibull_draws(400, 1.5, 2.0, 44);

  // ECDF: nondecreasing, exactly 0 and 1 at the extremes.
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  CHECK(ecdf_eval(v, std::nextafter(*mn, -1.0)) == 0.0);
  CHECK(ecdf_eval(v, *mx) == 1.0);
  double prev = 0.0;
  for (double x = *mn - 0.1; x < *mx + 0.1; x += 1e-3) {
    const double e = ecdf_eval(v, x);
    REQUIRE(e >= prev);
    prev = e;
  }

  // Moments: shift invariance of shape, sign flip of g1 under negation.
  const auto m = moment_summary(v);
  std::vector<double> shifted = v, negated = v;
  for (auto& x : shifted) x += 7.5;
  for (auto& x : negated) x = -x;
  const auto ms = moment_summary(shifted), mn_ = moment_summary(negated);
  CHECK(ms.g1 == doctest::Approx(m.g1).epsilon(1e-9));
  CHECK(ms.beta2 == doctest::Approx(m.beta2).epsilon(1e-9));
  CHECK(mn_.g1 == doctest::Approx(-m.g1).epsilon(1e-12));
  CHECK(mn_.beta1() == doctest::Approx(m.beta1()).epsilon(1e-12));

  // MLE beats the generating parameters on the same sample.
  const auto f = fit_weibull(v);
  CHECK(f.log_likelihood >= log_likelihood(Family::weibull, 1.5, 2.0, v));

  // p is nonincreasing in D at fixed n.
  double last_p = 1.0;
  for (double d = 0.0; d <= 1.0; d += 1e-4) {
    const double p = ks_asymptotic_p(d, 37);
    REQUIRE(p <= last_p);
    last_p = p;
  }

  // Closed-form inverse CDF.
  const FitResult expo{Family::weibull, 1.0, 1.0, 0.0, true, 0};
  CHECK(expo.quantile(0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // Preconditions on the fit.
  FitResult bad = f;
  bad.converged = false;
  CHECK_THROWS_AS(ks_test(v, bad), ParameterError);
  CHECK_THROWS_AS(qq_points(v, bad), ParameterError);
  CHECK_THROWS_AS(qq_points(std::vector<double>{1.0}, f), DegenerateSample);

  // Seed determinism of the cloud.
  const auto c1 = bootstrap_cloud(v, 50, 9), c2 = bootstrap_cloud(v, 50, 9), c3 = bootstrap_cloud(v, 50, 10);
  for (std::size_t i = 0; i < 50; ++i) CHECK(c1.points[i].beta2 == c2.points[i].beta2);
  CHECK(c1.points[0].beta2 != c3.points[0].beta2);
}
