#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridsweep/rng.hpp"

namespace gridsweep::stats {

struct Sample {
  std::vector<double> values;
  std::string label;

  /// Throws DomainError on a non-finite value.
  void validate() const;
};

enum class Family { normal, weibull };

const char* to_string(Family f);

/// A fitted law. Normal: param1 = mu, param2 = sigma. Weibull: param1 =
/// shape k, param2 = scale lambda.
struct FitResult {
  Family family = Family::normal;
  double param1 = 0.0;
  double param2 = 1.0;
  double log_likelihood = 0.0;
  bool converged = false;
  int iterations = 0;

  double cdf(double x) const;
  double quantile(double p) const;
  /// Draw one variate from the law (resampling for the bootstrap KS).
  double draw(Rng& rng) const;
};

/// Log-likelihood of `values` under the given family and parameters.
double log_likelihood(Family family, double param1, double param2, std::span<const double> values);

/// Fraction of values <= x. Throws DegenerateSample on an empty sample.
double ecdf_eval(std::span<const double> values, double x);

/// MLE with the population variance. Throws DegenerateSample for fewer than
/// two distinct values.
FitResult fit_normal(std::span<const double> values);

/// Two-parameter Weibull MLE. The shape solves the profile equation by
/// Newton's method, falling back to bisection whenever a step leaves the
/// current bracket. Throws DomainError for nonpositive data and
/// DegenerateSample for fewer than two distinct values; non-convergence is
/// reported through `converged`.
FitResult fit_weibull(std::span<const double> values);

enum class KsMode { asymptotic, parametric_bootstrap };

const char* to_string(KsMode m);

struct KsOptions {
  KsMode mode = KsMode::asymptotic;
  int n_resamples = 999;
  std::uint64_t seed = 1;
};

struct KsOutcome {
  double d = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  KsMode mode = KsMode::asymptotic;
  int failed_refits = 0;  // bootstrap resamples redrawn because the refit failed
};

/// sup |ECDF - cdf| over both sides of every step.
double ks_statistic(std::span<const double> values, const std::function<double(double)>& cdf);

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

/// Asymptotic p-value with the small-sample lambda correction.
double ks_asymptotic_p(double d, std::size_t n);

/// KS test against a fitted law. The bootstrap mode draws samples of size n
/// from the fitted law, refits the same family to each and counts refitted
/// statistics at least as large as the observed one.
KsOutcome ks_test(std::span<const double> values, const FitResult& fit, const KsOptions& options = {});

/// Population central moments. beta2 is the (non-excess) kurtosis m4/m2^2.
struct MomentSummary {
  double mean = 0.0;
  double variance = 0.0;
  double g1 = 0.0;
  double beta2 = 0.0;

  double beta1() const { return g1 * g1; }
};

MomentSummary moment_summary(std::span<const double> values);

struct PearsonPoint {
  double beta1 = 0.0;
  double beta2 = 0.0;
};

/// (skewness^2, kurtosis) of Weibull(k, 1). Throws DomainError for k <= 0.
PearsonPoint weibull_locus(double k);

struct BootstrapCloud {
  std::vector<PearsonPoint> points;
  std::vector<double> means;  // resample means, aligned with points
  int n_resamples = 0;
  std::uint64_t seed = 0;
  int redrawn = 0;  // degenerate resamples replaced
};

BootstrapCloud bootstrap_cloud(std::span<const double> values, int n_resamples, std::uint64_t seed);

struct QqPoint {
  double theoretical = 0.0;
  double empirical = 0.0;
};

/// Order statistics against fitted quantiles at (i - 0.5)/n.
std::vector<QqPoint> qq_points(std::span<const double> values, const FitResult& fit);

// CSV --------------------------------------------------------------------------------

/// First column of a CSV with a header row, one value per line.
Sample read_sample_csv(std::istream& in, std::string label);
void write_sample_csv(std::ostream& out, const Sample& sample);

struct FitReportRow {
  std::string label;
  FitResult fit;
  KsOutcome ks;
};

void write_fit_csv(std::ostream& out, const std::vector<FitReportRow>& rows);
void write_cloud_csv(std::ostream& out, const BootstrapCloud& cloud);
void write_qq_csv(std::ostream& out, const std::vector<QqPoint>& points);

}  // namespace gridsweep::stats

