// Copyright 2026 The kimdispatch Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Deterministic discrete-event cluster backend.
//
// Virtual time is integer minutes; events at equal times run in insertion
// order. Each bundle waits in its site's queue, then runs its steps as early
// as the step graph allows. A step is killed at its allotment (buffered
// placement height) plus the scheduler grace; the whole bundle is killed at
// request_minutes plus grace.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kimdispatch/accounting.hpp"
#include "kimdispatch/bundling.hpp"
#include "kimdispatch/dispatcher.hpp"
#include "kimdispatch/job.hpp"
#include "kimdispatch/stepgraph.hpp"

namespace kimdispatch::sim {

struct QueueWait {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  Minute lo = 0;
  Minute hi = 0;

  static QueueWait fixed(Minute m) { return {Kind::Fixed, m, m}; }
  static QueueWait uniform(Minute lo, Minute hi) {
    return {Kind::Uniform, lo, hi};
  }
  friend bool operator==(const QueueWait&, const QueueWait&) = default;
};

enum class FaultKind { StepOverrun, NodeFault, GlobalStall };

std::string_view to_string(FaultKind k);

struct FaultSpec {
  FaultKind kind = FaultKind::StepOverrun;
  std::string target;   // job id, or site id for GlobalStall
  double factor = 1.0;  // StepOverrun: true runtime multiplier
  int attempts = 1;     // NodeFault: executions whose sentinel is lost
  Minute from = 0;      // GlobalStall window [from, to)
  Minute to = 0;
  friend bool operator==(const FaultSpec&, const FaultSpec&) = default;
};

struct SiteToggle {
  Minute time = 0;
  std::string site_id;
  bool active = true;
  friend bool operator==(const SiteToggle&, const SiteToggle&) = default;
};

struct SimConfig {
  std::uint64_t seed = 1;
  std::vector<ExecutionSite> sites;
  BundlePolicy policy;
  std::map<std::string, QueueWait> queue_wait;  // absent: fixed 0
  Minute grace_minutes = 5;
  Minute tick_minutes = 1;
  Minute horizon_minutes = 100'000'000;
  int retry_cap = 10;
  BeneathRule beneath_rule = BeneathRule::CoreOverlap;
  std::vector<FaultSpec> faults;
  std::vector<SiteToggle> toggles;
  /// When set, every bundle directory is written under this root and the
  /// dispatcher reads results back from disk.
  std::optional<std::filesystem::path> materialize_dir;
  /// Run the dispatcher's conservation audit after every event (slow).
  bool audit_each_event = false;
};

struct Workload {
  std::vector<JobSpec> jobs;
};

/// Throws std::invalid_argument when the config is inconsistent with itself
/// or with the workload (unknown fault targets, bad windows, ...).
void validate(const SimConfig& config, const Workload& workload);

struct PlannedStep {
  std::string job_id;
  int cores = 0;
  bool starts = false;
  Minute start = 0;
  Minute end = 0;
  AccountingState state = AccountingState::Cancelled;
  int elapsed() const { return starts ? static_cast<int>(end - start) : 0; }
};

/// Execution plan for one bundle starting at `start`. Steps are returned in
/// bundle member order. `true_runtime` maps job id to minutes.
std::vector<PlannedStep> plan_bundle_execution(
    const Bundle& bundle, const StepGraph& graph,
    const std::map<std::string, int>& true_runtime, Minute start,
    Minute grace_minutes);

struct StepTrace {
  std::string job_id;
  int cores = 0;
  bool started = false;
  Minute start = 0;
  Minute end = 0;  // actual stop (end, kill, cancel or freeze)
  std::optional<AccountingState> state;
  std::vector<std::string> prerequisites;
};

struct BundleTrace {
  std::string bundle_id;
  std::string site_id;
  std::string handle;
  int request_cores = 0;
  int request_minutes = 0;
  double waste_fraction = 0.0;
  Minute submitted_at = 0;
  std::optional<Minute> started_at;
  std::optional<Minute> ended_at;
  bool cancelled = false;
  bool hung = false;
  std::vector<StepTrace> steps;
  std::optional<ArtifactSet> artifacts;
};

struct BundleMetrics {
  std::string bundle_id;
  std::string site_id;
  std::size_t n_jobs = 0;
  int request_cores = 0;
  int request_minutes = 0;
  double waste_fraction = 0.0;
  int completed = 0;
  int timeout = 0;
  int node_fault = 0;
  int cancelled = 0;
  int failed = 0;
};

struct Metrics {
  std::vector<BundleMetrics> bundles;
  std::size_t jobs = 0;
  std::size_t completed = 0;
  std::size_t errored = 0;
  std::size_t live = 0;
  double mean_turnaround = 0.0;
  double p95_turnaround = 0.0;
  int timeouts = 0;
  int rebinds = 0;
  int cancellations = 0;
  int node_faults = 0;
  std::map<std::string, int> bundles_per_site;
  std::int64_t core_minutes_requested = 0;
  std::int64_t core_minutes_consumed = 0;
};

struct SimResult {
  std::vector<std::string> event_log;
  std::vector<BundleTrace> bundles;
  std::vector<JobRecord> jobs;  // sorted by job id
  std::vector<ResultEnvelope> results;
  DispatcherCounters counters;
  std::vector<std::string> diagnostics;
  std::vector<std::string> audit_violations;
  Minute end_time = 0;
  bool all_terminal = false;
};

SimResult run(const SimConfig& config, const Workload& workload);

Metrics compute_metrics(const SimResult& result);

/// Nearest-rank percentile of `values` (q in (0, 1]); 0 when empty.
double percentile(std::vector<double> values, double q);

}  // namespace kimdispatch::sim
