#include "gridsweep/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <time.h>

#include <fmt/format.h>

#include "gridsweep/error.hpp"
#include "gridsweep/grid_sim.hpp"

namespace gridsweep::orch {

namespace fs = std::filesystem;
using io::format_double;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

}  // namespace

// Sweep ------------------------------------------------------------------------------

void SweepSpec::validate() const {
  params.validate();
  if (n_realizations < 1) throw ParameterError("n_realizations must be at least 1");
  if (parallelism < 1) throw ParameterError("parallelism must be at least 1");
  const auto& g = geometry;
  if (g.nx < 2 || g.ny < 2 || g.nz < 2)
    throw ParameterError(fmt::format("crystal dimensions must be at least 2, got {}x{}x{}", g.nx, g.ny, g.nz));
  if (g.grip_layers < 1 || g.ny <= 2 * g.grip_layers)
    throw ParameterError(fmt::format("ny = {} leaves no free layer between two grips of {} layers",
                                     g.ny, g.grip_layers));
  // The integrator needs each periodic side to hold twice the neighbour-list radius.
  const double a = md::equilibrium_lattice_constant(params.potential);
  const double need = 2.0 * (params.potential.cutoff + 0.3 * params.potential.sigma);
  if (std::min(g.nx, g.nz) * a < need)
    throw ParameterError(fmt::format("nx and nz must span at least {} (lattice constant {})", need, a));
}

SweepSpec SweepSpec::from_config(const io::KeyValueConfig& cfg, SweepSpec s) {
  for (const auto& [key, entry] : cfg.entries()) {
    const auto& [value, line] = entry;
    auto d = [&] { return io::parse_double(value, key, line); };
    auto i = [&] {
      const long long v = io::parse_int(value, key, line);
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ParseError(fmt::format("{} out of range", key), line);
      return static_cast<int>(v);
    };
    if (key == "nx") s.geometry.nx = i();
    else if (key == "ny") s.geometry.ny = i();
    else if (key == "nz") s.geometry.nz = i();
    else if (key == "grip_layers") s.geometry.grip_layers = i();
    else if (key == "strain_rate") s.params.strain_rate = d();
    else if (key == "target_strain") s.params.target_strain = d();
    else if (key == "checkpoint_dstrain") s.params.checkpoint_dstrain = d();
    else if (key == "dt") s.params.dt = d();
    else if (key == "temperature") s.params.temperature = d();
    else if (key == "equilibration_steps") s.params.equilibration_steps = i();
    else if (key == "cna_cutoff") s.params.cna_cutoff = d();
    else if (key == "lj_epsilon") s.params.potential.epsilon = d();
    else if (key == "lj_sigma") s.params.potential.sigma = d();
    else if (key == "lj_cutoff") s.params.potential.cutoff = d();
    else if (key == "n_realizations") s.n_realizations = i();
    else if (key == "base_seed") s.base_seed = static_cast<std::uint64_t>(io::parse_int(value, key, line));
    else if (key == "parallelism") s.parallelism = i();
    else throw ParseError(fmt::format("unknown sweep key '{}'", key), line);
  }
  return s;
}

int SweepLedger::n_ok() const {
  return static_cast<int>(std::count_if(jobs.begin(), jobs.end(),
                                        [](const JobResult& j) { return j.status == JobStatus::ok; }));
}

std::string job_file_name(int id) { return fmt::format("job_{:05d}.csv", id); }

SweepLedger sweep_run(const SweepSpec& spec) {
  spec.validate();
  io::StagedOutput staged(spec.output_dir);

  SweepLedger ledger;
  ledger.parallelism = spec.parallelism;
  ledger.jobs.resize(static_cast<std::size_t>(spec.n_realizations));
  std::atomic<int> next{0};
  using clock = std::chrono::steady_clock;

  auto worker = [&] {
    for (int id = next++; id < spec.n_realizations; id = next++) {
      JobResult& job = ledger.jobs[static_cast<std::size_t>(id)];
      job.id = id;
      job.seed = spec.base_seed + static_cast<std::uint64_t>(id);
      const auto t0 = clock::now();
      const double c0 = thread_cpu_seconds();
      try {
        const auto records = md::run_tensile(spec.params, spec.geometry, job.seed);
        auto out = open_out(staged.path(job_file_name(id)));
        md::write_records_csv(out, records);
        if (!out.flush()) throw std::runtime_error("write failed");
        job.status = JobStatus::ok;
      } catch (const std::exception& e) {
        job.status = JobStatus::failed;
        job.error = e.what();
        std::error_code ec;
        fs::remove(staged.path(job_file_name(id)), ec);
      }
      job.wall_time = std::chrono::duration<double>(clock::now() - t0).count();
      job.cpu_time = thread_cpu_seconds() - c0;
    }
  };

  const auto start = clock::now();
  {
    std::vector<std::jthread> pool;
    const int n_threads = std::min(spec.parallelism, spec.n_realizations);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  ledger.t_wall = std::chrono::duration<double>(clock::now() - start).count();
  for (const auto& j : ledger.jobs) {
    ledger.t_seq_est += j.wall_time;
    ledger.t_cpu += j.cpu_time;
  }

  {
    auto out = open_out(staged.path("ledger.csv"));
    io::CsvWriter w(out, {"id", "seed", "status", "wall_time_s", "cpu_time_s", "error"});
    for (const auto& j : ledger.jobs)
      w.row({std::to_string(j.id), std::to_string(j.seed), j.status == JobStatus::ok ? "ok" : "failed",
             format_double(j.wall_time), format_double(j.cpu_time), j.error});
  }
  {
    auto out = open_out(staged.path("sweep_summary.csv"));
    io::CsvWriter w(out, {"n_jobs", "n_ok", "n_failed", "parallelism", "t_seq_est_s", "t_wall_s",
                          "realized_speedup", "t_cpu_s", "cpu_speedup"});
    const int n_ok = ledger.n_ok();
    w.row({std::to_string(spec.n_realizations), std::to_string(n_ok),
           std::to_string(spec.n_realizations - n_ok), std::to_string(spec.parallelism),
           format_double(ledger.t_seq_est), format_double(ledger.t_wall),
           format_double(ledger.realized_speedup()), format_double(ledger.t_cpu),
           format_double(ledger.cpu_speedup())});
  }
  staged.commit();
  return ledger;
}

// Analysis ---------------------------------------------------------------------------

Observable parse_observable(const std::string& name) {
  if (name == "c_hcp") return Observable::c_hcp;
  if (name == "c_unk") return Observable::c_unk;
  if (name == "sigma_top") return Observable::sigma_top;
  throw ParameterError(fmt::format("unknown observable '{}' (c_hcp, c_unk, sigma_top)", name));
}

const char* to_string(Observable o) {
  switch (o) {
    case Observable::c_hcp: return "c_hcp";
    case Observable::c_unk: return "c_unk";
    case Observable::sigma_top: return "sigma_top";
  }
  return "?";
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::normal: return "normal";
    case Verdict::weibull: return "weibull";
    case Verdict::indistinguishable: return "indistinguishable";
    case Verdict::degenerate: return "degenerate";
  }
  return "?";
}

Verdict decide(double p_normal, double p_weibull, double threshold, double tie_factor) {
  if (std::isnan(p_weibull)) return Verdict::normal;
  if (std::isnan(p_normal)) return Verdict::weibull;
  const double lo = std::min(p_normal, p_weibull), hi = std::max(p_normal, p_weibull);
  if (lo > threshold && hi <= tie_factor * lo) return Verdict::indistinguishable;
  if (p_normal == p_weibull) return Verdict::indistinguishable;
  return p_weibull > p_normal ? Verdict::weibull : Verdict::normal;
}

namespace {

double pick(const md::DefectRecord& r, Observable o) {
  switch (o) {
    case Observable::c_hcp: return r.c_hcp;
    case Observable::c_unk: return r.c_unk;
    case Observable::sigma_top: return r.sigma_top;
  }
  return 0.0;
}

void write_verdict(const fs::path& path, const EnsembleReport& rep, double strain, Observable o) {
  auto out = open_out(path);
  io::CsvWriter w(out, {"label", "strain", "observable", "n", "verdict", "p_normal", "p_weibull",
                        "mode", "note"});
  w.row({rep.sample.label, format_double(strain), to_string(o), std::to_string(rep.sample.values.size()),
         to_string(rep.verdict), format_double(rep.p_normal), format_double(rep.p_weibull),
         to_string(stats::KsMode::parametric_bootstrap), rep.note});
}

}  // namespace

EnsembleReport analyze_sample(stats::Sample sample, double strain, Observable observable,
                              const fs::path& output_dir, const AnalyzeOptions& options) {
  sample.validate();
  if (sample.values.size() < 2)
    throw ParameterError(fmt::format("need at least two values to analyze, got {}", sample.values.size()));
  io::StagedOutput staged(output_dir);
  EnsembleReport rep;
  rep.sample = std::move(sample);
  const auto& v = rep.sample.values;
  {
    auto out = open_out(staged.path("sample.csv"));
    stats::write_sample_csv(out, rep.sample);
  }

  const bool spread = std::any_of(v.begin(), v.end(), [&v](double x) { return x != v.front(); });
  if (!spread) {
    rep.verdict = Verdict::degenerate;
    rep.note = fmt::format("all {} values equal {}", v.size(), format_double(v.front()));
    rep.p_normal = rep.p_weibull = std::numeric_limits<double>::quiet_NaN();
    write_verdict(staged.path("verdict.csv"), rep, strain, observable);
    staged.commit();
    return rep;
  }

  Rng seeds(options.seed);
  const std::uint64_t seed_ks_normal = seeds.next_u64();
  const std::uint64_t seed_ks_weibull = seeds.next_u64();
  const std::uint64_t seed_cloud = seeds.next_u64();

  auto run_ks = [&](const stats::FitResult& fit, std::uint64_t seed) {
    stats::KsOptions asym;
    stats::KsOptions boot{stats::KsMode::parametric_bootstrap, options.ks_resamples, seed};
    rep.fits.push_back({rep.sample.label, fit, stats::ks_test(v, fit, asym)});
    rep.fits.push_back({rep.sample.label, fit, stats::ks_test(v, fit, boot)});
    return rep.fits.back().ks.p_value;
  };

  rep.normal = stats::fit_normal(v);
  rep.p_normal = run_ks(*rep.normal, seed_ks_normal);

  rep.p_weibull = std::numeric_limits<double>::quiet_NaN();
  if (std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; })) {
    rep.weibull = stats::fit_weibull(v);
    if (rep.weibull->converged)
      rep.p_weibull = run_ks(*rep.weibull, seed_ks_weibull);
    else
      rep.note = "weibull fit did not converge";
  } else {
    rep.note = "nonpositive values; weibull not fitted";
  }
  rep.verdict = decide(rep.p_normal, rep.p_weibull, options.p_threshold, options.tie_factor);

  rep.moments = stats::moment_summary(v);
  rep.cloud = stats::bootstrap_cloud(v, options.cloud_resamples, seed_cloud);

  {
    auto out = open_out(staged.path("fits.csv"));
    stats::write_fit_csv(out, rep.fits);
  }
  {
    auto out = open_out(staged.path("moments.csv"));
    io::CsvWriter w(out, {"label", "n", "mean", "variance", "g1", "beta1", "beta2", "cloud_redrawn"});
    w.row({rep.sample.label, std::to_string(v.size()), format_double(rep.moments->mean),
           format_double(rep.moments->variance), format_double(rep.moments->g1),
           format_double(rep.moments->beta1()), format_double(rep.moments->beta2),
           std::to_string(rep.cloud->redrawn)});
  }
  {
    auto out = open_out(staged.path("cloud.csv"));
    stats::write_cloud_csv(out, *rep.cloud);
  }
  {
    // Weibull zone of the Pearson plane, for plotting next to the cloud.
    auto out = open_out(staged.path("locus.csv"));
    io::CsvWriter w(out, {"k", "beta1", "beta2"});
    for (int i = 0; i <= 60; ++i) {
      const double k = 0.8 * std::pow(25.0, i / 60.0);
      const auto p = stats::weibull_locus(k);
      w.row({format_double(k), format_double(p.beta1), format_double(p.beta2)});
    }
  }
  {
    auto out = open_out(staged.path("qq_normal.csv"));
    stats::write_qq_csv(out, stats::qq_points(v, *rep.normal));
  }
  if (rep.weibull && rep.weibull->converged) {
    auto out = open_out(staged.path("qq_weibull.csv"));
    stats::write_qq_csv(out, stats::qq_points(v, *rep.weibull));
  }
  write_verdict(staged.path("verdict.csv"), rep, strain, observable);
  staged.commit();
  return rep;
}

EnsembleReport analyze_ensemble(const fs::path& input_dir, double strain, Observable observable,
                                const fs::path& output_dir, const AnalyzeOptions& options) {
  if (!fs::is_directory(input_dir)) throw ParameterError("no such directory: " + input_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(input_dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("job_") && name.ends_with(".csv")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2)
    throw ParameterError(fmt::format("{} holds {} job files; need at least 2", input_dir.string(), files.size()));

  stats::Sample sample;
  sample.label = fmt::format("{}@{}", to_string(observable), format_double(strain));
  constexpr double kStrainTol = 1e-9;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + f.string());
    std::vector<md::DefectRecord> records;
    try {
      records = md::read_records_csv(in);
    } catch (const ParseError& e) {
      throw ParseError(f.filename().string() + ": " + e.what());
    }
    auto hit = std::find_if(records.begin(), records.end(), [&](const md::DefectRecord& r) {
      return std::abs(r.strain - strain) <= kStrainTol;
    });
    if (hit == records.end()) {
      std::string avail;
      for (const auto& r : records) avail += (avail.empty() ? "" : ", ") + format_double(r.strain);
      throw ParameterError(fmt::format("{} has no checkpoint at strain {}; available: {}",
                                       f.filename().string(), format_double(strain), avail));
    }
    sample.values.push_back(pick(*hit, observable));
  }
  return analyze_sample(std::move(sample), strain, observable, output_dir, options);
}

// Grid simulation --------------------------------------------------------------------

void simulate_cmd(const fs::path& scenario_file, const fs::path& output_dir,
                  std::optional<std::uint64_t> seed_override) {
  const sim::Scenario sc = sim::load_scenario(scenario_file);
  const auto trace = sim::run_scenario(sc.tasks, sc.population, seed_override.value_or(sc.seed), sc.policy);
  io::StagedOutput staged(output_dir);
  {
    auto out = open_out(staged.path("trace.csv"));
    sim::write_trace_csv(out, trace);
  }
  {
    auto out = open_out(staged.path("speedup.csv"));
    sim::write_speedup_csv(out, sim::speedup_table(trace));
  }
  {
    auto out = open_out(staged.path("regimes.csv"));
    sim::write_regimes_csv(out, trace);
  }
  staged.commit();
}

}  // namespace gridsweep::orch
