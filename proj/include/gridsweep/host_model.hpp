#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridsweep/rng.hpp"

namespace gridsweep::io {
class KeyValueConfig;
}

namespace gridsweep::hosts {

/// Core counts a volunteer host can report.
inline constexpr std::array<int, 10> kCpuCounts{1, 2, 4, 6, 8, 16, 32, 48, 64, 128};

struct HostSpec {
  int id = 0;
  double gflops = 1.0;
  int n_cpus = 1;
  double ram_gb = 1.0;
  double hdd_gb = 1.0;
  double on_rate = 0.0;   // attach rate while detached, 1/hour
  double off_rate = 0.0;  // detach rate while attached, 1/hour
};

using HostPopulation = std::vector<HostSpec>;

/// Host subsets the shipped parameter presets are calibrated against.
enum class Preset { registered, worked, lammps };

struct PopulationParams {
  long long n_hosts = 0;
  double gflops_mean = 2.25;
  double gflops_sd = 0.76;
  double gflops_floor = 0.1;
  double cpu_logmu = 0.0;
  double cpu_logsigma = 0.0;
  double ram_logmu = 0.0;
  double ram_logsigma = 0.0;
  double hdd_logmu = 0.0;
  double hdd_logsigma = 0.0;
  double on_rate = 0.0;
  double off_rate = 0.0;
  std::uint64_t seed = 0;

  /// Throws ParameterError on negative spreads, negative rates, n_hosts < 0
  /// or a nonpositive floor.
  void validate() const;

  static PopulationParams preset(Preset which, long long n_hosts, std::uint64_t seed);
  /// Start from `base` and override any keys present in `cfg`.
  static PopulationParams from_config(const io::KeyValueConfig& cfg, PopulationParams base);
};

Preset parse_preset(const std::string& name);

/// Nearest member of kCpuCounts; equidistant values go to the smaller count.
int snap_cpus(double raw);

/// Log-normal draws before any snapping, exposed for distribution checks.
struct RawDraws {
  std::vector<double> cpus;
  std::vector<double> ram_gb;
  std::vector<double> hdd_gb;
};

HostPopulation sample_hosts(const PopulationParams& params, RawDraws* raw = nullptr);

/// Multiplicative growth path of length n_steps + 1 starting at `initial`.
std::vector<double> gibrat_trajectory(double initial, int n_steps, double factor_logmu,
                                      double factor_logsigma, Rng& rng);

/// Statistics of one attribute. Standard deviation divides by n.
/// With count == 0 every statistic is NaN.
struct AttributeSummary {
  long long count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double min = 0.0;
  double max = 0.0;
};

AttributeSummary summarize(const std::vector<double>& values);

struct PopulationSummary {
  AttributeSummary gflops;
  AttributeSummary n_cpus;
  AttributeSummary ram_gb;
  AttributeSummary hdd_gb;
};

PopulationSummary population_summary(const HostPopulation& pop);

// Calibration -----------------------------------------------------------------

struct MeanSd {
  double mean;
  double sd;
};

/// Target mean and standard deviation per preset.
struct CalibrationTargets {
  MeanSd cpus;
  MeanSd gflops;
  MeanSd ram_gb;
  MeanSd hdd_gb;
};
CalibrationTargets targets_for(Preset which);

struct LogNormalParams {
  double logmu;
  double logsigma;
};

/// Closed-form moment match: the log-normal with this mean and sd.
LogNormalParams lognormal_from_mean_sd(MeanSd target);

struct CpuCalibration {
  LogNormalParams params;
  MeanSd achieved;  // post-snap moments at the chosen point
  double loss;      // sum of squared relative errors of mean and sd
};

/// Grid search for the log-normal whose snapped draws match `target`.
/// A coarse pass over logmu in [-1, 3], logsigma in [0, 2.5] (step 0.05) is
/// refined around the best cell with step 0.005. Common random numbers
/// (`n_draws` standard normals from `seed`) make the loss surface smooth.
CpuCalibration calibrate_cpus(MeanSd target, int n_draws = 20000, std::uint64_t seed = 20120901);

// CSV -------------------------------------------------------------------------

void write_population_csv(std::ostream& out, const HostPopulation& pop);
HostPopulation read_population_csv(std::istream& in);
HostPopulation read_population_csv(const std::filesystem::path& path);
void write_summary_csv(std::ostream& out, const PopulationSummary& summary);

}  // namespace gridsweep::hosts
