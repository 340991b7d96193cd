#include "gridsweep/grid_sim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>

#include "gridsweep/error.hpp"
#include "gridsweep/io.hpp"
#include "gridsweep/rng.hpp"

namespace gridsweep::sim {

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::dispatch: return "dispatch";
    case EventKind::complete: return "complete";
    case EventKind::requeue: return "requeue";
    case EventKind::host_up: return "host_up";
    case EventKind::host_down: return "host_down";
  }
  return "?";
}

int SimTrace::task_index(const std::string& name) const {
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (tasks[i].name == name) return static_cast<int>(i);
  }
  throw ParameterError("task '" + name + "' not in trace");
}

bool SimTrace::task_complete(int task) const {
  const auto t = static_cast<std::size_t>(task);
  return timing[t].completions == tasks[t].n_jobs;
}

double scaled_runtime(const TaskSpec& task, const hosts::HostSpec& host,
                      const ReferenceHost& ref) {
  if (!(host.gflops > 0.0)) throw ParameterError("host gflops must be > 0");
  return task.t_job_ref * ref.gflops / host.gflops;
}

namespace {

constexpr double kSecondsPerHour = 3600.0;

enum class QKind { toggle, finish, report, ready };

struct QEvent {
  double time;
  std::uint64_t seq;
  QKind kind;
  int host;
  long long job;
  std::uint64_t epoch;
};

struct Later {
  bool operator()(const QEvent& a, const QEvent& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

struct RunningJob {
  long long job;
  int task;
};

struct HostState {
  hosts::HostSpec spec;
  bool up = false;
  double ready_at = 0.0;    // first work request of a host attached at t=0
  std::uint64_t epoch = 0;  // bumped on detach; stale finish events carry an old epoch
  std::vector<RunningJob> running;
  Rng rng{0};
};

class Simulator {
 public:
  Simulator(const std::vector<TaskSpec>& tasks, const hosts::HostPopulation& pop,
            std::uint64_t seed, const PolicyConfig& policy)
      : policy_(policy), master_rng_(seed) {
    validate(tasks, pop);
    trace_.tasks = tasks;
    trace_.reference = policy.reference;
    trace_.timing.resize(tasks.size());

    long long next_id = 0;
    queues_.resize(tasks.size());
    job_offset_.resize(tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      job_offset_[t] = next_id;
      for (long long j = 0; j < tasks[t].n_jobs; ++j) queues_[t].push_back(next_id++);
      if (tasks[t].mode == TaskMode::shared) {
        shared_.push_back(static_cast<int>(t));
        shared_remaining_ += tasks[t].n_jobs;
      } else {
        dedicated_.push_back(static_cast<int>(t));
      }
    }
    job_task_.resize(static_cast<std::size_t>(next_id));
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      for (long long j = 0; j < tasks[t].n_jobs; ++j) {
        job_task_[static_cast<std::size_t>(job_offset_[t] + j)] = static_cast<int>(t);
      }
    }
    jobs_remaining_ = next_id;
    if (shared_remaining_ == 0) dedicated_phase_ = 0;

    hosts_.reserve(pop.size());
    for (const auto& spec : pop) {
      HostState h;
      h.spec = spec;
      h.rng = master_rng_.split();
      hosts_.push_back(std::move(h));
    }
    report_rng_ = master_rng_.split();

    // Fastest first, ties by id: the order simultaneous work requests are served in.
    service_order_.resize(hosts_.size());
    std::iota(service_order_.begin(), service_order_.end(), 0);
    std::stable_sort(service_order_.begin(), service_order_.end(), [&](int a, int b) {
      const auto& ha = hosts_[static_cast<std::size_t>(a)].spec;
      const auto& hb = hosts_[static_cast<std::size_t>(b)].spec;
      return ha.gflops != hb.gflops ? ha.gflops > hb.gflops : ha.id < hb.id;
    });

    for (std::size_t i = 0; i < hosts_.size(); ++i) init_host(static_cast<int>(i));
  }

  SimTrace run() {
    dispatch_pass(0.0);
    while (jobs_remaining_ > 0) {
      if (queue_.empty()) {
        throw SimulationStall(fmt::format(
            "simulation stalled: {} jobs pending and no host will ever attach", jobs_remaining_));
      }
      const double now = queue_.top().time;
      if (now > policy_.horizon) {
        throw SimulationStall(fmt::format("simulation passed horizon {} s with {} jobs pending",
                                          policy_.horizon, jobs_remaining_));
      }
      while (!queue_.empty() && queue_.top().time == now) {
        const QEvent ev = queue_.top();
        queue_.pop();
        handle(ev);
      }
      if (jobs_remaining_ > 0) dispatch_pass(now);
    }
    return std::move(trace_);
  }

 private:
  static void validate(const std::vector<TaskSpec>& tasks, const hosts::HostPopulation& pop) {
    if (pop.empty()) throw ParameterError("run_scenario needs at least one host");
    for (const auto& t : tasks) {
      if (t.n_jobs < 1) throw ParameterError("task '" + t.name + "' needs n_jobs >= 1");
      if (!(t.t_job_ref > 0.0)) throw ParameterError("task '" + t.name + "' needs t_job_ref > 0");
    }
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      for (std::size_t j = i + 1; j < tasks.size(); ++j) {
        if (tasks[i].name == tasks[j].name) {
          throw ParameterError("duplicate task name '" + tasks[i].name + "'");
        }
      }
    }
    for (const auto& h : pop) {
      if (!(h.gflops > 0.0) || h.n_cpus < 1) throw ParameterError("invalid host in population");
    }
  }

  void push(double time, QKind kind, int host, long long job = -1, std::uint64_t epoch = 0) {
    queue_.push(QEvent{time, seq_++, kind, host, job, epoch});
  }

  void init_host(int idx) {
    HostState& h = hosts_[static_cast<std::size_t>(idx)];
    const double on = h.spec.on_rate;
    const double off = h.spec.off_rate;
    if (off == 0.0) {
      h.up = true;  // never detaches
    } else if (on == 0.0) {
      h.up = false;  // never attaches
    } else {
      h.up = h.rng.uniform() < on / (on + off);
    }
    if (h.up && policy_.startup_spread > 0.0) {
      h.ready_at = h.rng.exponential(1.0 / policy_.startup_spread);
      push(h.ready_at, QKind::ready, idx);
    }
    schedule_toggle(idx, 0.0);
  }

  void schedule_toggle(int idx, double now) {
    HostState& h = hosts_[static_cast<std::size_t>(idx)];
    const double rate = (h.up ? h.spec.off_rate : h.spec.on_rate) / kSecondsPerHour;
    if (rate > 0.0) push(now + h.rng.exponential(rate), QKind::toggle, idx);
  }

  void record(double time, EventKind kind, long long job, int task, int host) {
    trace_.events.push_back(Event{time, kind, job, task, host});
  }

  void handle(const QEvent& ev) {
    switch (ev.kind) {
      case QKind::toggle: toggle(ev); break;
      case QKind::finish: finish(ev); break;
      case QKind::report: complete(ev.time, ev.job, ev.host); break;
      case QKind::ready: break;  // the dispatch pass after this batch picks the host up
    }
  }

  void toggle(const QEvent& ev) {
    HostState& h = hosts_[static_cast<std::size_t>(ev.host)];
    h.up = !h.up;
    if (h.up) {
      record(ev.time, EventKind::host_up, -1, -1, h.spec.id);
    } else {
      ++h.epoch;
      // Restart-from-zero: running jobs go back to the head of their queue.
      // Reverse order keeps their original relative order at the front.
      for (auto it = h.running.rbegin(); it != h.running.rend(); ++it) {
        queues_[static_cast<std::size_t>(it->task)].push_front(it->job);
        ++trace_.timing[static_cast<std::size_t>(it->task)].requeues;
      }
      for (const auto& r : h.running) record(ev.time, EventKind::requeue, r.job, r.task, h.spec.id);
      h.running.clear();
      record(ev.time, EventKind::host_down, -1, -1, h.spec.id);
    }
    schedule_toggle(ev.host, ev.time);
  }

  void finish(const QEvent& ev) {
    HostState& h = hosts_[static_cast<std::size_t>(ev.host)];
    if (ev.epoch != h.epoch) return;  // host detached since dispatch
    auto it = std::find_if(h.running.begin(), h.running.end(),
                           [&](const RunningJob& r) { return r.job == ev.job; });
    if (it == h.running.end()) return;
    h.running.erase(it);
    if (policy_.report_delay) {
      const double delay =
          std::exp(report_rng_.normal(policy_.report_delay_logmu, policy_.report_delay_logsigma));
      push(ev.time + delay, QKind::report, ev.host, ev.job);
    } else {
      complete(ev.time, ev.job, ev.host);
    }
  }

  void complete(double now, long long job, int host_idx) {
    const int task = job_task_[static_cast<std::size_t>(job)];
    auto& timing = trace_.timing[static_cast<std::size_t>(task)];
    ++timing.completions;
    timing.last_complete = now;
    record(now, EventKind::complete, job, task, hosts_[static_cast<std::size_t>(host_idx)].spec.id);
    --jobs_remaining_;
    if (trace_.tasks[static_cast<std::size_t>(task)].mode == TaskMode::shared) {
      if (--shared_remaining_ == 0 && !dedicated_.empty()) dedicated_phase_ = 0;
    } else if (timing.completions == trace_.tasks[static_cast<std::size_t>(task)].n_jobs) {
      ++dedicated_phase_;
    }
  }

  // Next job to hand out, or -1.
  long long take_job() {
    if (shared_remaining_ > 0) {
      for (std::size_t k = 0; k < shared_.size(); ++k) {
        const std::size_t pos = (rr_ + k) % shared_.size();
        auto& q = queues_[static_cast<std::size_t>(shared_[pos])];
        if (!q.empty()) {
          const long long job = q.front();
          q.pop_front();
          rr_ = (pos + 1) % shared_.size();
          return job;
        }
      }
      return -1;
    }
    if (dedicated_phase_ >= 0 && static_cast<std::size_t>(dedicated_phase_) < dedicated_.size()) {
      auto& q = queues_[static_cast<std::size_t>(dedicated_[static_cast<std::size_t>(dedicated_phase_)])];
      if (!q.empty()) {
        const long long job = q.front();
        q.pop_front();
        return job;
      }
    }
    return -1;
  }

  void dispatch_pass(double now) {
    for (int idx : service_order_) {
      HostState& h = hosts_[static_cast<std::size_t>(idx)];
      if (!h.up || now < h.ready_at) continue;
      while (static_cast<int>(h.running.size()) < h.spec.n_cpus) {
        const long long job = take_job();
        if (job < 0) return;
        const int task = job_task_[static_cast<std::size_t>(job)];
        auto& timing = trace_.timing[static_cast<std::size_t>(task)];
        if (timing.dispatches == 0) timing.first_dispatch = now;
        ++timing.dispatches;
        h.running.push_back(RunningJob{job, task});
        record(now, EventKind::dispatch, job, task, h.spec.id);
        const double runtime = policy_.dispatch_latency +
                               scaled_runtime(trace_.tasks[static_cast<std::size_t>(task)], h.spec,
                                              policy_.reference);
        push(now + runtime, QKind::finish, idx, job, h.epoch);
      }
    }
  }

  PolicyConfig policy_;
  Rng master_rng_;
  Rng report_rng_{0};
  SimTrace trace_;
  std::vector<HostState> hosts_;
  std::vector<int> service_order_;
  std::vector<std::deque<long long>> queues_;
  std::vector<long long> job_offset_;
  std::vector<int> job_task_;
  std::vector<int> shared_;
  std::vector<int> dedicated_;
  std::size_t rr_ = 0;
  long long shared_remaining_ = 0;
  long long jobs_remaining_ = 0;
  int dedicated_phase_ = -1;
  std::priority_queue<QEvent, std::vector<QEvent>, Later> queue_;
  std::uint64_t seq_ = 0;
};

}  // namespace

SimTrace run_scenario(const std::vector<TaskSpec>& tasks, const hosts::HostPopulation& pop,
                      std::uint64_t seed, const PolicyConfig& policy) {
  return Simulator(tasks, pop, seed, policy).run();
}

double speedup(double t_seq, double t_dg) {
  if (!(t_dg > 0.0)) throw ParameterError("speedup needs a positive distributed runtime");
  return t_seq / t_dg;
}

double task_speedup(const SimTrace& trace, const std::string& task_name) {
  const int t = trace.task_index(task_name);
  if (!trace.task_complete(t)) throw ParameterError("task '" + task_name + "' did not complete");
  const auto& task = trace.tasks[static_cast<std::size_t>(t)];
  return speedup(task.t_seq(), trace.timing[static_cast<std::size_t>(t)].t_dg());
}

std::vector<SpeedupRow> speedup_table(const SimTrace& trace) {
  std::vector<SpeedupRow> rows;
  auto task_row = [&](std::size_t t) {
    const auto& task = trace.tasks[t];
    if (!trace.task_complete(static_cast<int>(t))) {
      throw ParameterError("task '" + task.name + "' did not complete");
    }
    const double t_dg = trace.timing[t].t_dg();
    return SpeedupRow{task.name, task.mode == TaskMode::shared ? "shared" : "dedicated",
                      task.t_job_ref, task.n_jobs, task.t_seq(), t_dg, speedup(task.t_seq(), t_dg)};
  };

  SpeedupRow subtotal{"Subtotal", "subtotal", 0.0, 0, 0.0, 0.0, 0.0};
  std::size_t n_shared = 0;
  for (std::size_t t = 0; t < trace.tasks.size(); ++t) {
    if (trace.tasks[t].mode != TaskMode::shared) continue;
    rows.push_back(task_row(t));
    subtotal.n_jobs += rows.back().n_jobs;
    subtotal.t_seq += rows.back().t_seq;
    subtotal.t_dg = std::max(subtotal.t_dg, rows.back().t_dg);
    ++n_shared;
  }
  if (n_shared >= 2) {
    subtotal.speedup = speedup(subtotal.t_seq, subtotal.t_dg);
    rows.push_back(subtotal);
  }
  SpeedupRow total{"TOTAL", "total", 0.0, subtotal.n_jobs, subtotal.t_seq, subtotal.t_dg, 0.0};
  for (std::size_t t = 0; t < trace.tasks.size(); ++t) {
    if (trace.tasks[t].mode != TaskMode::dedicated) continue;
    rows.push_back(task_row(t));
    total.n_jobs += rows.back().n_jobs;
    total.t_seq += rows.back().t_seq;
    total.t_dg += rows.back().t_dg;
  }
  if (trace.tasks.size() >= 2) {
    total.speedup = speedup(total.t_seq, total.t_dg);
    rows.push_back(total);
  }
  return rows;
}

double total_speedup(const SimTrace& trace) {
  const auto rows = speedup_table(trace);
  return rows.back().speedup;
}

RegimeSegmentation segment_regimes(const SimTrace& trace, const std::string& task_name) {
  const int task = trace.task_index(task_name);
  if (!trace.task_complete(task)) throw ParameterError("task '" + task_name + "' did not complete");
  RegimeSegmentation seg;
  const auto& timing = trace.timing[static_cast<std::size_t>(task)];
  seg.t_start = timing.first_dispatch;
  seg.t_end = timing.last_complete;

  long long in_flight = 0;
  for (const auto& ev : trace.events) {
    if (ev.task != task) continue;
    if (ev.kind == EventKind::dispatch) {
      ++in_flight;
      seg.t_active_end = ev.time;
      if (in_flight > seg.max_in_flight) {
        seg.max_in_flight = in_flight;
        seg.t_initial_end = ev.time;
      }
    } else if (ev.kind == EventKind::complete || ev.kind == EventKind::requeue) {
      --in_flight;
    }
  }
  for (const auto& ev : trace.events) {
    if (ev.task != task || ev.kind != EventKind::complete) continue;
    const int stage = ev.time <= seg.t_initial_end ? 0 : ev.time <= seg.t_active_end ? 1 : 2;
    ++seg.completions[stage];
  }
  const double bounds[4] = {seg.t_start, seg.t_initial_end, seg.t_active_end, seg.t_end};
  for (int s = 0; s < 3; ++s) {
    const double span = bounds[s + 1] - bounds[s];
    seg.rates[s] = span > 0.0 ? static_cast<double>(seg.completions[s]) / span
                              : std::numeric_limits<double>::quiet_NaN();
  }
  seg.degenerate = seg.t_initial_end == seg.t_start && seg.t_active_end == seg.t_initial_end;
  return seg;
}

// Files -------------------------------------------------------------------------

namespace {

TaskMode parse_mode(const std::string& text, int line) {
  if (text == "shared") return TaskMode::shared;
  if (text == "dedicated") return TaskMode::dedicated;
  throw ParseError("task mode must be 'shared' or 'dedicated', got '" + text + "'", line);
}

std::vector<std::string> split_bar(const std::string& line) {
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, '|')) parts.push_back(io::trim(part));
  return parts;
}

bool parse_switch(const std::string& value, int line) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ParseError("expected on/off, got '" + value + "'", line);
}

}  // namespace

Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir) {
  Scenario sc;
  io::KeyValueConfig population, policy, simulation;
  std::string section;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = io::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("unterminated section header", line_no);
      section = io::trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "population" && section != "policy" && section != "simulation" &&
          section != "tasks") {
        throw ParseError("unknown section [" + section + "]", line_no);
      }
      continue;
    }
    if (section.empty()) throw ParseError("content before the first section", line_no);
    if (section == "tasks") {
      const auto parts = split_bar(line);
      if (parts.size() != 4) {
        throw ParseError("task line needs 'name | t_job_ref minutes | n_jobs | mode'", line_no);
      }
      TaskSpec t;
      t.name = parts[0];
      if (t.name.empty()) throw ParseError("empty task name", line_no);
      t.t_job_ref = io::parse_double(parts[1], "t_job_ref", line_no) * 60.0;
      t.n_jobs = io::parse_int(parts[2], "n_jobs", line_no);
      t.mode = parse_mode(parts[3], line_no);
      if (!(t.t_job_ref > 0.0)) throw ParseError("t_job_ref must be > 0", line_no);
      if (t.n_jobs < 1) throw ParseError("n_jobs must be >= 1", line_no);
      for (const auto& other : sc.tasks) {
        if (other.name == t.name) throw ParseError("duplicate task '" + t.name + "'", line_no);
      }
      sc.tasks.push_back(std::move(t));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = io::trim(std::string_view(line).substr(0, eq));
    const std::string value = io::trim(std::string_view(line).substr(eq + 1));
    auto& target = section == "population" ? population : section == "policy" ? policy : simulation;
    target.set(key, value, line_no);
  }
  if (sc.tasks.empty()) throw ParseError("scenario has no tasks");

  sc.seed = static_cast<std::uint64_t>(simulation.get_int("seed", 1));
  for (const auto& [key, entry] : simulation.entries()) {
    if (key != "seed") throw ParseError("unknown simulation key '" + key + "'", entry.second);
  }

  for (const auto& [key, entry] : policy.entries()) {
    const auto& [value, line] = entry;
    if (key == "dispatch_latency_s") {
      sc.policy.dispatch_latency = io::parse_double(value, key, line);
      if (sc.policy.dispatch_latency < 0.0) throw ParseError("negative dispatch latency", line);
    } else if (key == "report_delay") {
      sc.policy.report_delay = parse_switch(value, line);
    } else if (key == "report_delay_median_h") {
      const double median = io::parse_double(value, key, line);
      if (!(median > 0.0)) throw ParseError("report_delay_median_h must be > 0", line);
      sc.policy.report_delay_logmu = std::log(median * 3600.0);
    } else if (key == "startup_spread_h") {
      sc.policy.startup_spread = io::parse_double(value, key, line) * 3600.0;
      if (sc.policy.startup_spread < 0.0) throw ParseError("startup_spread_h must be >= 0", line);
    } else if (key == "report_delay_logsigma") {
      sc.policy.report_delay_logsigma = io::parse_double(value, key, line);
      if (sc.policy.report_delay_logsigma < 0.0) throw ParseError("negative logsigma", line);
    } else if (key == "horizon_days") {
      sc.policy.horizon = io::parse_double(value, key, line) * 86400.0;
    } else if (key == "reference_gflops") {
      sc.policy.reference.gflops = io::parse_double(value, key, line);
      if (!(sc.policy.reference.gflops > 0.0)) throw ParseError("reference_gflops must be > 0", line);
    } else {
      throw ParseError("unknown policy key '" + key + "'", line);
    }
  }

  if (auto csv = population.get("csv")) {
    if (population.entries().size() != 1) {
      throw ParseError("[population] csv cannot be combined with generator keys");
    }
    std::filesystem::path p = *csv;
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    sc.population = hosts::read_population_csv(p);
  } else {
    hosts::PopulationParams params =
        hosts::PopulationParams::from_config(population, hosts::PopulationParams{});
    if (params.n_hosts < 1) throw ParseError("[population] needs n_hosts >= 1 or csv = path");
    try {
      sc.population = hosts::sample_hosts(params);
    } catch (const ParameterError& e) {
      throw ParseError(std::string("[population] ") + e.what());
    }
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario " + path.string());
  return parse_scenario(in, path.parent_path());
}

void write_trace_csv(std::ostream& out, const SimTrace& trace) {
  io::CsvWriter w(out, {"time_s", "kind", "job_id", "task", "host_id"});
  for (const auto& ev : trace.events) {
    w.row({io::format_double(ev.time), to_string(ev.kind),
           ev.job_id >= 0 ? std::to_string(ev.job_id) : std::string(),
           ev.task >= 0 ? trace.tasks[static_cast<std::size_t>(ev.task)].name : std::string(),
           std::to_string(ev.host_id)});
  }
}

void write_speedup_csv(std::ostream& out, const std::vector<SpeedupRow>& rows) {
  io::CsvWriter w(out, {"task", "mode", "t_job_hours", "n_jobs", "t_seq_days", "t_dg_days",
                        "speedup"});
  for (const auto& r : rows) {
    const bool aggregate = r.mode == "subtotal" || r.mode == "total";
    w.row({r.label, r.mode, aggregate ? std::string() : io::format_double(r.t_job_ref / 3600.0),
           std::to_string(r.n_jobs), io::format_double(r.t_seq / 86400.0),
           io::format_double(r.t_dg / 86400.0), io::format_double(r.speedup)});
  }
}

void write_regimes_csv(std::ostream& out, const SimTrace& trace) {
  io::CsvWriter w(out, {"task", "t_start_s", "t_initial_end_s", "t_active_end_s", "t_end_s",
                        "max_in_flight", "n_initial", "n_active", "n_final", "rate_initial",
                        "rate_active", "rate_final", "degenerate"});
  for (const auto& task : trace.tasks) {
    const auto s = segment_regimes(trace, task.name);
    w.row({task.name, io::format_double(s.t_start), io::format_double(s.t_initial_end),
           io::format_double(s.t_active_end), io::format_double(s.t_end),
           std::to_string(s.max_in_flight), std::to_string(s.completions[0]),
           std::to_string(s.completions[1]), std::to_string(s.completions[2]),
           io::format_double(s.rates[0]), io::format_double(s.rates[1]),
           io::format_double(s.rates[2]), s.degenerate ? "1" : "0"});
  }
}

}  // namespace gridsweep::sim
