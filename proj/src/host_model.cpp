#include "gridsweep/host_model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "gridsweep/error.hpp"
#include "gridsweep/io.hpp"

namespace gridsweep::hosts {

namespace {

// Output of calibrate_cpus() for each preset (rerun with `gridsweep hosts calibrate`).
constexpr LogNormalParams kCpuRegistered{1.055, 0.920};
constexpr LogNormalParams kCpuWorked{1.225, 0.965};
constexpr LogNormalParams kCpuLammps{1.300, 1.115};

// Host availability: mean attached period 8 h, mean detached period 100 h
// (about 7% of hosts attached at any moment).
constexpr double kDefaultOnRate = 0.01;
constexpr double kDefaultOffRate = 0.125;

void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

}  // namespace

void PopulationParams::validate() const {
  require(n_hosts >= 0, "n_hosts must be >= 0");
  require(gflops_sd >= 0.0, "gflops_sd must be >= 0");
  require(cpu_logsigma >= 0.0, "cpu_logsigma must be >= 0");
  require(ram_logsigma >= 0.0, "ram_logsigma must be >= 0");
  require(hdd_logsigma >= 0.0, "hdd_logsigma must be >= 0");
  require(gflops_floor > 0.0, "gflops_floor must be > 0");
  require(on_rate >= 0.0 && off_rate >= 0.0, "churn rates must be >= 0");
  for (double v : {gflops_mean, gflops_sd, gflops_floor, cpu_logmu, cpu_logsigma, ram_logmu,
                   ram_logsigma, hdd_logmu, hdd_logsigma, on_rate, off_rate}) {
    require(std::isfinite(v), "population parameters must be finite");
  }
  // Rejection sampling below the floor needs a reachable region.
  require(gflops_sd > 0.0 || gflops_mean >= gflops_floor,
          "gflops_mean below gflops_floor with zero spread");
  require(gflops_sd == 0.0 || (gflops_mean - gflops_floor) / gflops_sd > -6.0,
          "gflops_floor too far above gflops_mean");
}

CalibrationTargets targets_for(Preset which) {
  switch (which) {
    case Preset::registered:
      return {{4.30, 4.95}, {2.25, 0.76}, {6.68, 12.15}, {257.0, 371.0}};
    case Preset::worked:
      return {{5.3, 6.5}, {2.3, 0.7}, {10.0, 18.0}, {220.0, 310.0}};
    case Preset::lammps:
      return {{6.7, 10.0}, {2.3, 0.7}, {16.0, 22.0}, {210.0, 320.0}};
  }
  throw ParameterError("unknown preset");
}

Preset parse_preset(const std::string& name) {
  if (name == "registered") return Preset::registered;
  if (name == "worked") return Preset::worked;
  if (name == "lammps") return Preset::lammps;
  throw ParameterError("unknown preset '" + name + "' (registered, worked, lammps)");
}

PopulationParams PopulationParams::preset(Preset which, long long n_hosts, std::uint64_t seed) {
  const CalibrationTargets t = targets_for(which);
  const LogNormalParams cpu = which == Preset::registered ? kCpuRegistered
                              : which == Preset::worked   ? kCpuWorked
                                                          : kCpuLammps;
  const LogNormalParams ram = lognormal_from_mean_sd(t.ram_gb);
  const LogNormalParams hdd = lognormal_from_mean_sd(t.hdd_gb);
  PopulationParams p;
  p.n_hosts = n_hosts;
  p.gflops_mean = t.gflops.mean;
  p.gflops_sd = t.gflops.sd;
  p.gflops_floor = 0.1;
  p.cpu_logmu = cpu.logmu;
  p.cpu_logsigma = cpu.logsigma;
  p.ram_logmu = ram.logmu;
  p.ram_logsigma = ram.logsigma;
  p.hdd_logmu = hdd.logmu;
  p.hdd_logsigma = hdd.logsigma;
  p.on_rate = kDefaultOnRate;
  p.off_rate = kDefaultOffRate;
  p.seed = seed;
  return p;
}

PopulationParams PopulationParams::from_config(const io::KeyValueConfig& cfg,
                                               PopulationParams p) {
  if (auto name = cfg.get("preset")) {
    p = preset(parse_preset(*name), p.n_hosts, p.seed);
  }
  p.n_hosts = cfg.get_int("n_hosts", p.n_hosts);
  p.gflops_mean = cfg.get_double("gflops_mean", p.gflops_mean);
  p.gflops_sd = cfg.get_double("gflops_sd", p.gflops_sd);
  p.gflops_floor = cfg.get_double("gflops_floor", p.gflops_floor);
  p.cpu_logmu = cfg.get_double("cpu_logmu", p.cpu_logmu);
  p.cpu_logsigma = cfg.get_double("cpu_logsigma", p.cpu_logsigma);
  p.ram_logmu = cfg.get_double("ram_logmu", p.ram_logmu);
  p.ram_logsigma = cfg.get_double("ram_logsigma", p.ram_logsigma);
  p.hdd_logmu = cfg.get_double("hdd_logmu", p.hdd_logmu);
  p.hdd_logsigma = cfg.get_double("hdd_logsigma", p.hdd_logsigma);
  p.on_rate = cfg.get_double("on_rate", p.on_rate);
  p.off_rate = cfg.get_double("off_rate", p.off_rate);
  p.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(p.seed)));
  for (const auto& [key, entry] : cfg.entries()) {
    static const std::array<const char*, 15> known{
        "preset",    "n_hosts",   "gflops_mean",  "gflops_sd", "gflops_floor",
        "cpu_logmu", "cpu_logsigma", "ram_logmu", "ram_logsigma", "hdd_logmu",
        "hdd_logsigma", "on_rate", "off_rate",    "seed",      "csv"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParseError("unknown population key '" + key + "'", entry.second);
    }
  }
  return p;
}

int snap_cpus(double raw) {
  int best = kCpuCounts.front();
  double best_dist = std::abs(raw - best);
  for (int c : kCpuCounts) {
    const double d = std::abs(raw - c);
    if (d < best_dist) {  // strict: ties keep the smaller count
      best = c;
      best_dist = d;
    }
  }
  return best;
}

HostPopulation sample_hosts(const PopulationParams& params, RawDraws* raw) {
  params.validate();
  Rng rng(params.seed);
  HostPopulation pop;
  pop.reserve(static_cast<std::size_t>(params.n_hosts));
  if (raw) {
    *raw = RawDraws{};
    raw->cpus.reserve(pop.capacity());
    raw->ram_gb.reserve(pop.capacity());
    raw->hdd_gb.reserve(pop.capacity());
  }
  for (long long i = 0; i < params.n_hosts; ++i) {
    double gflops;
    do {
      gflops = rng.normal(params.gflops_mean, params.gflops_sd);
    } while (gflops < params.gflops_floor);
    const double cpus = std::exp(rng.normal(params.cpu_logmu, params.cpu_logsigma));
    const double ram = std::exp(rng.normal(params.ram_logmu, params.ram_logsigma));
    const double hdd = std::exp(rng.normal(params.hdd_logmu, params.hdd_logsigma));
    if (raw) {
      raw->cpus.push_back(cpus);
      raw->ram_gb.push_back(ram);
      raw->hdd_gb.push_back(hdd);
    }
    pop.push_back(HostSpec{static_cast<int>(i), gflops, snap_cpus(cpus), ram, hdd,
                           params.on_rate, params.off_rate});
  }
  return pop;
}

std::vector<double> gibrat_trajectory(double initial, int n_steps, double factor_logmu,
                                      double factor_logsigma, Rng& rng) {
  require(initial > 0.0, "gibrat_trajectory: initial value must be > 0");
  require(n_steps >= 0, "gibrat_trajectory: n_steps must be >= 0");
  require(factor_logsigma >= 0.0, "gibrat_trajectory: factor_logsigma must be >= 0");
  std::vector<double> path;
  path.reserve(static_cast<std::size_t>(n_steps) + 1);
  path.push_back(initial);
  const double fixed_factor = std::exp(factor_logmu);
  double value = initial;
  for (int t = 0; t < n_steps; ++t) {
    const double f = factor_logsigma == 0.0
                         ? fixed_factor
                         : std::exp(rng.normal(factor_logmu, factor_logsigma));
    value *= f;
    path.push_back(value);
  }
  return path;
}

AttributeSummary summarize(const std::vector<double>& values) {
  AttributeSummary s;
  s.count = static_cast<long long>(values.size());
  if (values.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.mean = s.sd = s.min = s.max = nan;
    return s;
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size()));
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  // Rounding in the mean can step outside [min, max] for near-constant data.
  s.mean = std::clamp(s.mean, s.min, s.max);
  return s;
}

PopulationSummary population_summary(const HostPopulation& pop) {
  std::vector<double> g, c, r, h;
  for (const auto& host : pop) {
    g.push_back(host.gflops);
    c.push_back(host.n_cpus);
    r.push_back(host.ram_gb);
    h.push_back(host.hdd_gb);
  }
  return {summarize(g), summarize(c), summarize(r), summarize(h)};
}

LogNormalParams lognormal_from_mean_sd(MeanSd target) {
  require(target.mean > 0.0 && target.sd >= 0.0, "log-normal target needs mean > 0, sd >= 0");
  const double var_log = std::log1p((target.sd * target.sd) / (target.mean * target.mean));
  return {std::log(target.mean) - 0.5 * var_log, std::sqrt(var_log)};
}

namespace {

struct SnapMoments {
  double mean;
  double sd;
};

SnapMoments snapped_moments(const std::vector<double>& z, double logmu, double logsigma) {
  // Snap in log space against the log of the midpoints between neighbouring
  // counts; avoids one exp() per draw in the search's inner loop.
  static const std::array<double, kCpuCounts.size() - 1> log_mid = [] {
    std::array<double, kCpuCounts.size() - 1> m{};
    for (std::size_t i = 0; i + 1 < kCpuCounts.size(); ++i) {
      m[i] = std::log(0.5 * (kCpuCounts[i] + kCpuCounts[i + 1]));
    }
    return m;
  }();
  double sum = 0.0, sum2 = 0.0;
  for (double zi : z) {
    const double x = logmu + logsigma * zi;
    std::size_t k = 0;
    while (k < log_mid.size() && x > log_mid[k]) ++k;
    const double c = kCpuCounts[k];
    sum += c;
    sum2 += c * c;
  }
  const double n = static_cast<double>(z.size());
  const double mean = sum / n;
  return {mean, std::sqrt(std::max(0.0, sum2 / n - mean * mean))};
}

double calibration_loss(SnapMoments m, MeanSd target) {
  const double em = (m.mean - target.mean) / target.mean;
  const double es = (m.sd - target.sd) / target.sd;
  return em * em + es * es;
}

}  // namespace

CpuCalibration calibrate_cpus(MeanSd target, int n_draws, std::uint64_t seed) {
  require(target.mean > 0.0 && target.sd > 0.0, "calibration target must be positive");
  require(n_draws > 0, "calibration needs draws");
  Rng rng(seed);
  std::vector<double> z(static_cast<std::size_t>(n_draws));
  for (double& zi : z) zi = rng.normal();

  CpuCalibration best{{0.0, 0.0}, {0.0, 0.0}, std::numeric_limits<double>::infinity()};
  auto consider = [&](double mu, double sigma) {
    const SnapMoments m = snapped_moments(z, mu, sigma);
    const double loss = calibration_loss(m, target);
    if (loss < best.loss) best = {{mu, sigma}, {m.mean, m.sd}, loss};
  };
  // Integer loop counters keep the grid points exactly reproducible.
  for (int i = 0; i <= 80; ++i) {
    for (int j = 0; j <= 50; ++j) consider(-1.0 + 0.05 * i, 0.05 * j);
  }
  const LogNormalParams coarse = best.params;
  for (int i = -10; i <= 10; ++i) {
    for (int j = -10; j <= 10; ++j) {
      const double sigma = coarse.logsigma + 0.005 * j;
      if (sigma < 0.0) continue;
      consider(coarse.logmu + 0.005 * i, sigma);
    }
  }
  return best;
}

void write_population_csv(std::ostream& out, const HostPopulation& pop) {
  io::CsvWriter w(out, {"id", "gflops", "n_cpus", "ram_gb", "hdd_gb", "on_rate", "off_rate"});
  for (const auto& h : pop) {
    w.row({std::to_string(h.id), io::format_double(h.gflops), std::to_string(h.n_cpus),
           io::format_double(h.ram_gb), io::format_double(h.hdd_gb),
           io::format_double(h.on_rate), io::format_double(h.off_rate)});
  }
}

HostPopulation read_population_csv(std::istream& in) {
  const io::CsvTable t = io::read_csv(in);
  const std::size_t c_id = t.column("id"), c_g = t.column("gflops"), c_c = t.column("n_cpus"),
                    c_r = t.column("ram_gb"), c_h = t.column("hdd_gb"),
                    c_on = t.column("on_rate"), c_off = t.column("off_rate");
  HostPopulation pop;
  int line = 1;
  for (const auto& row : t.rows) {
    ++line;
    HostSpec h;
    h.id = static_cast<int>(io::parse_int(row[c_id], "id", line));
    h.gflops = io::parse_double(row[c_g], "gflops", line);
    h.n_cpus = static_cast<int>(io::parse_int(row[c_c], "n_cpus", line));
    h.ram_gb = io::parse_double(row[c_r], "ram_gb", line);
    h.hdd_gb = io::parse_double(row[c_h], "hdd_gb", line);
    h.on_rate = io::parse_double(row[c_on], "on_rate", line);
    h.off_rate = io::parse_double(row[c_off], "off_rate", line);
    if (!(h.gflops > 0.0) || !(h.ram_gb > 0.0) || !(h.hdd_gb > 0.0)) {
      throw ParseError("host resources must be positive", line);
    }
    if (std::find(kCpuCounts.begin(), kCpuCounts.end(), h.n_cpus) == kCpuCounts.end()) {
      throw ParseError(fmt::format("n_cpus {} is not a valid core count", h.n_cpus), line);
    }
    if (h.on_rate < 0.0 || h.off_rate < 0.0) throw ParseError("negative churn rate", line);
    pop.push_back(h);
  }
  return pop;
}

HostPopulation read_population_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return read_population_csv(in);
}

void write_summary_csv(std::ostream& out, const PopulationSummary& s) {
  io::CsvWriter w(out, {"attribute", "count", "mean", "sd", "min", "max"});
  auto emit = [&](const char* name, const AttributeSummary& a) {
    w.row({name, std::to_string(a.count), io::format_double(a.mean), io::format_double(a.sd),
           io::format_double(a.min), io::format_double(a.max)});
  };
  emit("n_cpus", s.n_cpus);
  emit("gflops", s.gflops);
  emit("ram_gb", s.ram_gb);
  emit("hdd_gb", s.hdd_gb);
}

}  // namespace gridsweep::hosts
