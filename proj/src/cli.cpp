#include "gridsweep/cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "gridsweep/error.hpp"
#include "gridsweep/host_model.hpp"
#include "gridsweep/io.hpp"
#include "gridsweep/orchestrator.hpp"

namespace gridsweep::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

io::KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? io::KeyValueConfig{} : io::KeyValueConfig::load(path);
}

struct Options {
  std::string out_dir;
  std::string config;
  std::uint64_t seed = 1;
  bool seed_given = false;

  // hosts
  std::string preset = "registered";
  long long n_hosts = 4161;
  std::string hosts_in;
  int draws = 20000;

  // sim
  std::string scenario;

  // sweep
  int realizations = 0;
  int jobs = 0;

  // analyze
  std::string in_dir;
  double strain = 0.2;
  std::string observable = "c_unk";
  int ks_resamples = 0;  // 0: not given on the command line
  int cloud_resamples = 0;
};

void hosts_sample(const Options& o, std::ostream& out) {
  auto params = hosts::PopulationParams::preset(hosts::parse_preset(o.preset), o.n_hosts, o.seed);
  params = hosts::PopulationParams::from_config(load_config(o.config), params);
  if (o.seed_given) params.seed = o.seed;
  const auto pop = hosts::sample_hosts(params);
  io::StagedOutput staged(o.out_dir);
  {
    auto f = open_out(staged.path("hosts.csv"));
    hosts::write_population_csv(f, pop);
  }
  {
    auto f = open_out(staged.path("summary.csv"));
    hosts::write_summary_csv(f, hosts::population_summary(pop));
  }
  staged.commit();
  fmt::print(out, "sampled {} hosts into {}\n", pop.size(), o.out_dir);
}

void hosts_summary(const Options& o, std::ostream& out) {
  const auto pop = hosts::read_population_csv(fs::path(o.hosts_in));
  io::StagedOutput staged(o.out_dir);
  {
    auto f = open_out(staged.path("summary.csv"));
    hosts::write_summary_csv(f, hosts::population_summary(pop));
  }
  staged.commit();
  fmt::print(out, "summarized {} hosts into {}\n", pop.size(), o.out_dir);
}

void hosts_calibrate(const Options& o, std::ostream& out) {
  const auto target = hosts::targets_for(hosts::parse_preset(o.preset));
  const auto cpu = hosts::calibrate_cpus(target.cpus, o.draws, o.seed_given ? o.seed : 20120901);
  io::StagedOutput staged(o.out_dir);
  {
    auto f = open_out(staged.path("calibration.csv"));
    io::CsvWriter w(f, {"preset", "attribute", "logmu", "logsigma", "achieved_mean", "achieved_sd",
                        "target_mean", "target_sd"});
    using io::format_double;
    w.row({o.preset, "n_cpus", format_double(cpu.params.logmu), format_double(cpu.params.logsigma),
           format_double(cpu.achieved.mean), format_double(cpu.achieved.sd),
           format_double(target.cpus.mean), format_double(target.cpus.sd)});
    // RAM and disk are unsnapped, so the closed form matches exactly.
    for (auto [name, t] : {std::pair{"ram_gb", target.ram_gb}, std::pair{"hdd_gb", target.hdd_gb}}) {
      const auto p = hosts::lognormal_from_mean_sd(t);
      w.row({o.preset, name, format_double(p.logmu), format_double(p.logsigma), format_double(t.mean),
             format_double(t.sd), format_double(t.mean), format_double(t.sd)});
    }
  }
  staged.commit();
  fmt::print(out, "cpu log-normal ({}, {}) -> mean {:.3f} sd {:.3f}\n", cpu.params.logmu,
             cpu.params.logsigma, cpu.achieved.mean, cpu.achieved.sd);
}

void sim_run(const Options& o, std::ostream& out) {
  const std::string file = o.scenario.empty() ? o.config : o.scenario;
  if (file.empty()) throw ParameterError("sim run needs --scenario");
  orch::simulate_cmd(file, o.out_dir, o.seed_given ? std::optional(o.seed) : std::nullopt);
  fmt::print(out, "wrote trace.csv, speedup.csv, regimes.csv to {}\n", o.out_dir);
}

int sweep_run(const Options& o, std::ostream& out, std::ostream& err) {
  orch::SweepSpec spec;
  spec = orch::SweepSpec::from_config(load_config(o.config), spec);
  if (o.seed_given) spec.base_seed = o.seed;
  if (o.realizations > 0) spec.n_realizations = o.realizations;
  if (o.jobs > 0) spec.parallelism = o.jobs;
  spec.output_dir = o.out_dir;
  const auto ledger = orch::sweep_run(spec);
  fmt::print(out, "{} of {} jobs ok; T_seq_est {:.2f} s, T_wall {:.2f} s, speedup {:.2f}\n", ledger.n_ok(),
             ledger.jobs.size(), ledger.t_seq_est, ledger.t_wall, ledger.realized_speedup());
  if (ledger.n_ok() == 0) {
    fmt::print(err, "error: every job failed; first error: {}\n", ledger.jobs.front().error);
    return kExitRuntime;
  }
  return kExitOk;
}

void analyze(const Options& o, std::ostream& out) {
  orch::AnalyzeOptions opt;
  opt.seed = o.seed;
  const auto cfg = load_config(o.config);
  for (const auto& [key, entry] : cfg.entries()) {
    const auto& [value, line] = entry;
    if (key == "ks_resamples") opt.ks_resamples = static_cast<int>(io::parse_int(value, key, line));
    else if (key == "cloud_resamples") opt.cloud_resamples = static_cast<int>(io::parse_int(value, key, line));
    else if (key == "p_threshold") opt.p_threshold = io::parse_double(value, key, line);
    else if (key == "tie_factor") opt.tie_factor = io::parse_double(value, key, line);
    else if (key == "seed") { if (!o.seed_given) opt.seed = static_cast<std::uint64_t>(io::parse_int(value, key, line)); }
    else throw ParseError(fmt::format("unknown analyze key '{}'", key), line);
  }
  if (o.ks_resamples > 0) opt.ks_resamples = o.ks_resamples;
  if (o.cloud_resamples > 0) opt.cloud_resamples = o.cloud_resamples;
  const auto rep = orch::analyze_ensemble(o.in_dir, o.strain, orch::parse_observable(o.observable),
                                          o.out_dir, opt);
  fmt::print(out, "{}: n={} verdict={} (p_normal={:.4g}, p_weibull={:.4g})\n", rep.sample.label,
             rep.sample.values.size(), orch::to_string(rep.verdict), rep.p_normal, rep.p_weibull);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Desktop-grid sweep simulator, MD tensile ensembles and their statistics", "gridsweep"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* cmd, bool needs_out = true) {
    auto* opt = cmd->add_option("--out", o.out_dir, "Output directory");
    if (needs_out) opt->required();
    cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&o](const std::uint64_t& s) { o.seed = s, o.seed_given = true; }, "RNG seed");
  };

  auto* hosts = app.add_subcommand("hosts", "Volunteer host populations");
  hosts->require_subcommand(1);
  auto* h_sample = hosts->add_subcommand("sample", "Sample a host population");
  common(h_sample);
  h_sample->add_option("--preset", o.preset, "registered | worked | lammps");
  h_sample->add_option("--n", o.n_hosts, "Number of hosts")->check(CLI::NonNegativeNumber);
  auto* h_summary = hosts->add_subcommand("summary", "Summarize a host population CSV");
  common(h_summary);
  h_summary->add_option("--in", o.hosts_in, "hosts.csv")->required()->check(CLI::ExistingFile);
  auto* h_cal = hosts->add_subcommand("calibrate", "Fit the CPU-count log-normal to a preset");
  common(h_cal);
  h_cal->add_option("--preset", o.preset, "registered | worked | lammps");
  h_cal->add_option("--draws", o.draws, "Common random numbers per evaluation")->check(CLI::PositiveNumber);

  auto* sim = app.add_subcommand("sim", "Desktop-grid simulation");
  sim->require_subcommand(1);
  auto* s_run = sim->add_subcommand("run", "Run a scenario file");
  common(s_run);
  s_run->add_option("--scenario", o.scenario, "Scenario file")->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "MD ensemble sweeps");
  sweep->require_subcommand(1);
  auto* w_run = sweep->add_subcommand("run", "Run tensile realizations on a local worker pool");
  common(w_run);
  w_run->add_option("--realizations", o.realizations, "Override n_realizations")->check(CLI::PositiveNumber);
  w_run->add_option("--jobs", o.jobs, "Override parallelism")->check(CLI::PositiveNumber);

  auto* an = app.add_subcommand("analyze", "Fit and test an ensemble observable at one strain");
  common(an);
  an->add_option("--in", o.in_dir, "Directory of job CSVs")->required()->check(CLI::ExistingDirectory);
  an->add_option("--strain", o.strain, "Checkpoint strain");
  an->add_option("--observable", o.observable, "c_hcp | c_unk | sigma_top");
  an->add_option("--ks-resamples", o.ks_resamples, "Parametric bootstrap resamples")->check(CLI::PositiveNumber);
  an->add_option("--cloud-resamples", o.cloud_resamples, "Moment-cloud resamples")->check(CLI::PositiveNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*h_sample) hosts_sample(o, out);
    else if (*h_summary) hosts_summary(o, out);
    else if (*h_cal) hosts_calibrate(o, out);
    else if (*s_run) sim_run(o, out);
    else if (*w_run) return sweep_run(o, out, err);
    else if (*an) analyze(o, out);
    return kExitOk;
  } catch (const ParseError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const ParameterError& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
}

}  // namespace gridsweep::cli
