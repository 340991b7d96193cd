#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridsweep/host_model.hpp"

namespace gridsweep::sim {

enum class TaskMode { shared, dedicated };

/// One type of job in the sweep. Durations are seconds.
struct TaskSpec {
  std::string name;
  double t_job_ref = 0.0;  // runtime on the reference host
  long long n_jobs = 0;
  TaskMode mode = TaskMode::shared;

  double t_seq() const { return static_cast<double>(n_jobs) * t_job_ref; }
};

/// The machine job runtimes are quoted on (2.7 GHz, 2514 MFLOPs).
struct ReferenceHost {
  double gflops = 2.514;
};

struct PolicyConfig {
  ReferenceHost reference;
  double dispatch_latency = 0.0;  // seconds added to every job
  bool report_delay = false;      // per-job log-normal delay before results reach the master
  double report_delay_logmu = 0.0;     // log of the delay in seconds
  double report_delay_logsigma = 0.0;
  double horizon = 10.0 * 365.0 * 86400.0;  // stall limit, seconds
  double startup_spread = 0.0;  // mean delay of each attached host's first request at t=0, seconds
};

enum class EventKind { dispatch, complete, requeue, host_up, host_down };

const char* to_string(EventKind kind);

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::dispatch;
  long long job_id = -1;  // -1 for host events
  int task = -1;          // index into SimTrace::tasks, -1 for host events
  int host_id = -1;
};

struct TaskTiming {
  double first_dispatch = 0.0;
  double last_complete = 0.0;
  long long dispatches = 0;
  long long requeues = 0;
  long long completions = 0;

  double t_dg() const { return last_complete - first_dispatch; }
};

struct SimTrace {
  std::vector<TaskSpec> tasks;
  std::vector<Event> events;  // nondecreasing time
  std::vector<TaskTiming> timing;
  ReferenceHost reference;

  int task_index(const std::string& name) const;  // throws ParameterError if absent
  bool task_complete(int task) const;
};

/// Runtime of one job of `task` on `host`, scaling linearly with FLOPs.
double scaled_runtime(const TaskSpec& task, const hosts::HostSpec& host,
                      const ReferenceHost& ref);

/// Run the pull-based master/worker simulation.
///
/// An attached host with a free core pulls the next job. Shared tasks are
/// interleaved round-robin from per-task FIFO queues; dedicated tasks start
/// one after another once every shared job has completed. A host detaching
/// drops its running jobs back to the front of their task queue and they
/// restart from zero. Requests arriving at the same instant are served
/// fastest host first, then by host id.
SimTrace run_scenario(const std::vector<TaskSpec>& tasks, const hosts::HostPopulation& pop,
                      std::uint64_t seed, const PolicyConfig& policy = {});

/// T_seq / T_dg of one completed task.
double task_speedup(const SimTrace& trace, const std::string& task_name);

/// Speedup from raw sequential and distributed durations.
double speedup(double t_seq, double t_dg);

struct SpeedupRow {
  std::string label;
  std::string mode;  // "shared", "dedicated", "subtotal", "total"
  double t_job_ref = 0.0;
  long long n_jobs = 0;
  double t_seq = 0.0;
  double t_dg = 0.0;
  double speedup = 0.0;
};

/// Per-task rows, then a Subtotal over shared tasks (T_dg = the maximum over
/// them, since they run concurrently) when there are at least two, then
/// TOTAL (Subtotal T_dg plus each dedicated task's T_dg) when there is more
/// than one task.
std::vector<SpeedupRow> speedup_table(const SimTrace& trace);

/// Total speedup over all tasks under the same convention.
double total_speedup(const SimTrace& trace);

struct RegimeSegmentation {
  double t_start = 0.0;        // first dispatch
  double t_initial_end = 0.0;  // in-flight count first reaches its maximum
  double t_active_end = 0.0;   // last dispatch
  double t_end = 0.0;          // last completion
  long long max_in_flight = 0;
  long long completions[3] = {0, 0, 0};
  double rates[3] = {0.0, 0.0, 0.0};  // completions per second, NaN for empty stages
  bool degenerate = false;            // all boundaries coincide

  double rate_initial() const { return rates[0]; }
  double rate_active() const { return rates[1]; }
  double rate_final() const { return rates[2]; }
};

RegimeSegmentation segment_regimes(const SimTrace& trace, const std::string& task_name);

// Files -------------------------------------------------------------------------

struct Scenario {
  std::vector<TaskSpec> tasks;
  hosts::HostPopulation population;
  PolicyConfig policy;
  std::uint64_t seed = 1;
};

/// Parse a scenario file. Sections: `[population]` (either `csv = path`,
/// resolved relative to the scenario file, or population keys such as
/// `preset`, `n_hosts`, `seed`), `[policy]`, `[simulation]` (`seed`) and
/// `[tasks]` with lines `name | t_job_ref minutes | n_jobs | shared|dedicated`.
Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

void write_trace_csv(std::ostream& out, const SimTrace& trace);
void write_speedup_csv(std::ostream& out, const std::vector<SpeedupRow>& rows);
void write_regimes_csv(std::ostream& out, const SimTrace& trace);

}  // namespace gridsweep::sim
