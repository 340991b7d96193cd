#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gridsweep/io.hpp"
#include "gridsweep/md.hpp"
#include "gridsweep/stats.hpp"

namespace gridsweep::orch {

// Sweep ------------------------------------------------------------------------------

struct SweepSpec {
  md::Geometry geometry;
  md::MDParams params;
  int n_realizations = 1;
  std::uint64_t base_seed = 1;
  int parallelism = 1;
  std::filesystem::path output_dir;

  void validate() const;
  /// Keys: nx ny nz grip_layers strain_rate target_strain checkpoint_dstrain
  /// dt temperature equilibration_steps cna_cutoff lj_epsilon lj_sigma
  /// lj_cutoff n_realizations base_seed parallelism. Unknown keys throw ParseError.
  static SweepSpec from_config(const io::KeyValueConfig& cfg, SweepSpec base);
};

enum class JobStatus { ok, failed };

struct JobResult {
  int id = 0;
  std::uint64_t seed = 0;
  double wall_time = 0.0;  // seconds
  double cpu_time = 0.0;   // thread CPU seconds; unlike wall time, not inflated by time-slicing
  JobStatus status = JobStatus::failed;
  std::string error;
};

struct SweepLedger {
  std::vector<JobResult> jobs;  // by id
  int parallelism = 1;
  double t_seq_est = 0.0;  // sum of job wall times
  double t_wall = 0.0;     // pool makespan
  double t_cpu = 0.0;      // sum of job CPU times

  int n_ok() const;
  double realized_speedup() const { return t_wall > 0.0 ? t_seq_est / t_wall : 0.0; }
  /// Same ratio from CPU times; stays near 1 when the pool outnumbers the cores.
  double cpu_speedup() const { return t_wall > 0.0 ? t_cpu / t_wall : 0.0; }
};

/// `job_00042.csv`
std::string job_file_name(int id);

/// Run every realization through a pool of `parallelism` threads. Job files,
/// `ledger.csv` and `sweep_summary.csv` are staged and land together; failed
/// jobs are recorded in the ledger and leave no job file.
SweepLedger sweep_run(const SweepSpec& spec);

// Analysis ---------------------------------------------------------------------------

enum class Observable { c_hcp, c_unk, sigma_top };

Observable parse_observable(const std::string& name);
const char* to_string(Observable o);

struct AnalyzeOptions {
  int ks_resamples = 999;
  int cloud_resamples = 1000;
  std::uint64_t seed = 1;
  double p_threshold = 0.05;
  double tie_factor = 2.0;
};

enum class Verdict { normal, weibull, indistinguishable, degenerate };

const char* to_string(Verdict v);

/// Larger bootstrap KS p wins, unless both exceed `threshold` and lie within
/// `tie_factor` of each other. A NaN p (family not fitted) never wins.
Verdict decide(double p_normal, double p_weibull, double threshold, double tie_factor);

struct EnsembleReport {
  stats::Sample sample;
  Verdict verdict = Verdict::degenerate;
  std::string note;
  std::optional<stats::FitResult> normal;
  std::optional<stats::FitResult> weibull;
  std::vector<stats::FitReportRow> fits;  // normal then weibull, asymptotic then bootstrap
  std::optional<stats::MomentSummary> moments;
  std::optional<stats::BootstrapCloud> cloud;
  double p_normal = 0.0;   // bootstrap mode
  double p_weibull = 0.0;  // bootstrap mode, NaN when Weibull was not fitted
};

/// Pull `observable` at `strain` out of every job file in `input_dir` (sorted
/// by name), run the statistics and write the report files to `output_dir`.
/// A degenerate sample yields only `sample.csv` and a `degenerate` verdict row.
EnsembleReport analyze_ensemble(const std::filesystem::path& input_dir, double strain,
                                Observable observable, const std::filesystem::path& output_dir,
                                const AnalyzeOptions& options = {});

/// Same pipeline on a sample that is already in memory.
EnsembleReport analyze_sample(stats::Sample sample, double strain, Observable observable,
                              const std::filesystem::path& output_dir, const AnalyzeOptions& options = {});

// Grid simulation --------------------------------------------------------------------

/// Run a scenario file and write `trace.csv`, `speedup.csv` and `regimes.csv`.
void simulate_cmd(const std::filesystem::path& scenario_file, const std::filesystem::path& output_dir,
                  std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace gridsweep::orch
