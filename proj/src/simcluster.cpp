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

#include "kimdispatch/simcluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>

namespace kimdispatch::sim {

std::string_view to_string(FaultKind k) {
  switch (k) {
    case FaultKind::StepOverrun: return "STEP_OVERRUN";
    case FaultKind::NodeFault: return "NODE_FAULT";
    case FaultKind::GlobalStall: return "GLOBAL_STALL";
  }
  return "?";
}

void validate(const SimConfig& config, const Workload& workload) {
  config.policy.validate();
  if (config.grace_minutes < 0) {
    throw std::invalid_argument("config: grace must be >= 0");
  }
  if (config.tick_minutes < 1) {
    throw std::invalid_argument("config: tick must be >= 1");
  }
  if (config.horizon_minutes < 0) {
    throw std::invalid_argument("config: horizon must be >= 0");
  }
  std::set<std::string> sites;
  for (const auto& s : config.sites) sites.insert(s.site_id);
  std::set<std::string> jobs;
  for (const auto& j : workload.jobs) {
    if (!jobs.insert(j.job_id).second) {
      throw std::invalid_argument("workload: duplicate job " + j.job_id);
    }
    if (j.cores < 1 || j.requested_minutes < 1 || j.true_runtime_minutes < 1 ||
        j.arrival_minute < 0) {
      throw std::invalid_argument("workload: job " + j.job_id +
                                  " has a non-positive quantity");
    }
  }
  for (const auto& [site, wait] : config.queue_wait) {
    if (!sites.contains(site)) {
      throw std::invalid_argument("config: queue wait for unknown site " +
                                  site);
    }
    if (wait.lo < 0 || wait.hi < wait.lo) {
      throw std::invalid_argument("config: bad queue wait for site " + site);
    }
  }
  for (const auto& f : config.faults) {
    const bool site_target = f.kind == FaultKind::GlobalStall;
    if (site_target ? !sites.contains(f.target) : !jobs.contains(f.target)) {
      throw std::invalid_argument("config: fault " +
                                  std::string(to_string(f.kind)) +
                                  " targets unknown " +
                                  (site_target ? "site " : "job ") + f.target);
    }
    if (f.kind == FaultKind::StepOverrun && !(f.factor > 0.0)) {
      throw std::invalid_argument("config: overrun factor must be positive");
    }
    if (f.kind == FaultKind::NodeFault && f.attempts < 1) {
      throw std::invalid_argument("config: node fault attempts must be >= 1");
    }
    if (f.kind == FaultKind::GlobalStall && f.to <= f.from) {
      throw std::invalid_argument("config: stall window must be non-empty");
    }
  }
  for (const auto& t : config.toggles) {
    if (!sites.contains(t.site_id)) {
      throw std::invalid_argument("config: toggle for unknown site " +
                                  t.site_id);
    }
  }
}

std::vector<PlannedStep> plan_bundle_execution(
    const Bundle& bundle, const StepGraph& graph,
    const std::map<std::string, int>& true_runtime, Minute start,
    Minute grace_minutes) {
  const Minute deadline = start + bundle.request_minutes + grace_minutes;
  std::map<std::string, PlannedStep> planned;
  std::map<std::string, const BundleMember*> member;
  for (const auto& m : bundle.members) member[m.job_id] = &m;

  for (const auto& id : graph.topological_order()) {
    const BundleMember& m = *member.at(id);
    PlannedStep step;
    step.job_id = id;
    step.cores = m.placement.rect.cores;
    Minute ready = start;
    for (const auto& p : graph.prerequisites(id)) {
      ready = std::max(ready, planned.at(p).starts ? planned.at(p).end
                                                   : deadline);
    }
    if (ready >= deadline) {
      planned[id] = step;
      continue;
    }
    const Minute allot = m.placement.rect.minutes;
    const Minute runtime = true_runtime.at(id);
    step.starts = true;
    step.start = ready;
    if (runtime <= allot + grace_minutes) {
      step.end = ready + runtime;
      step.state = AccountingState::Completed;
    } else {
      step.end = ready + allot + grace_minutes;
      step.state = AccountingState::Timeout;
    }
    if (step.end > deadline) {
      step.end = deadline;
      step.state = deadline - ready >= allot ? AccountingState::Timeout
                                             : AccountingState::Cancelled;
    }
    planned[id] = step;
  }

  std::vector<PlannedStep> out;
  out.reserve(bundle.members.size());
  for (const auto& m : bundle.members) out.push_back(planned.at(m.job_id));
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

namespace {

enum class EventKind {
  Arrival,
  Tick,
  SiteToggle,
  BundleStart,
  StepStart,
  StepEnd,
  BundleEnd,
  Notify
};

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Arrival: return "ARRIVAL";
    case EventKind::Tick: return "TICK";
    case EventKind::SiteToggle: return "SITE_TOGGLE";
    case EventKind::BundleStart: return "BUNDLE_START";
    case EventKind::StepStart: return "STEP_START";
    case EventKind::StepEnd: return "STEP_END";
    case EventKind::BundleEnd: return "BUNDLE_END";
    case EventKind::Notify: return "NOTIFY";
  }
  return "?";
}

struct Event {
  Minute time = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Tick;
  std::size_t index = 0;  // job, toggle or bundle index
  std::size_t step = 0;
  BackendEventKind notify = BackendEventKind::Accepted;

  bool operator>(const Event& o) const {
    return time != o.time ? time > o.time : seq > o.seq;
  }
};

enum class Phase { Queued, Running, Done, Cancelled, Hung };

struct SimStep {
  PlannedStep plan;
  bool started = false;
  bool ended = false;
  bool sentinel = false;
};

struct SimBundle {
  BundleTrace trace;
  Bundle bundle;
  StepGraph graph;
  std::string makefile;
  Phase phase = Phase::Queued;
  Minute frozen_at = 0;
  std::vector<SimStep> steps;
};

class Simulation final : public Backend {
 public:
  Simulation(const SimConfig& config, const Workload& workload)
      : config_(config),
        workload_(workload),
        rng_(Rng::derive(config.seed, 1)),
        dispatcher_(config.sites,
                    DispatcherOptions{config.policy, config.retry_cap,
                                      Rng::derive(config.seed, 0),
                                      config.beneath_rule},
                    *this, &sink_,
                    [this](Minute t, const std::string& msg) {
                      record(t, "DISPATCH " + msg);
                    }) {
    for (const auto& j : workload_.jobs) {
      double runtime = j.true_runtime_minutes;
      for (const auto& f : config_.faults) {
        if (f.kind == FaultKind::StepOverrun && f.target == j.job_id) {
          runtime = std::ceil(runtime * f.factor);
        }
        if (f.kind == FaultKind::NodeFault && f.target == j.job_id) {
          lost_sentinels_[j.job_id] += f.attempts;
        }
      }
      true_runtime_[j.job_id] = std::max(1, static_cast<int>(runtime));
    }
  }

  SimResult run() {
    std::vector<std::size_t> order(workload_.jobs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return workload_.jobs[a].arrival_minute <
                              workload_.jobs[b].arrival_minute;
                     });
    for (std::size_t i : order) {
      push({workload_.jobs[i].arrival_minute, 0, EventKind::Arrival, i});
    }
    for (std::size_t i = 0; i < config_.toggles.size(); ++i) {
      push({config_.toggles[i].time, 0, EventKind::SiteToggle, i});
    }
    pending_arrivals_ = workload_.jobs.size();
    push({0, 0, EventKind::Tick});

    Minute now = 0;
    while (!queue_.empty()) {
      Event e = queue_.top();
      if (e.time > config_.horizon_minutes) break;
      queue_.pop();
      now = e.time;
      dispatch(e);
      if (config_.audit_each_event) {
        for (auto& v : dispatcher_.audit()) {
          result_.audit_violations.push_back("t=" + std::to_string(now) +
                                             " " + v);
        }
      }
    }

    result_.end_time = now;
    result_.all_terminal = pending_arrivals_ == 0 && dispatcher_.all_terminal();
    if (!result_.all_terminal) {
      result_.diagnostics.push_back(
          "horizon " + std::to_string(config_.horizon_minutes) +
          " reached with " +
          std::to_string(workload_.jobs.size() - dispatcher_.terminal_count()) +
          " live jobs");
    }
    for (auto& v : dispatcher_.audit()) {
      result_.audit_violations.push_back("final " + v);
    }
    for (const auto& [id, j] : dispatcher_.jobs()) result_.jobs.push_back(j);
    result_.results = sink_.envelopes;
    result_.counters = dispatcher_.counters();
    for (auto& b : bundles_) {
      finalize_trace(b);
      result_.bundles.push_back(std::move(b.trace));
    }
    return std::move(result_);
  }

  std::optional<std::string> submit(const BundleMaterials& m,
                                    Minute now) override {
    const std::size_t index = bundles_.size();
    SimBundle b;
    b.bundle = m.bundle;
    b.graph = m.graph;
    b.makefile = m.makefile;
    b.trace.bundle_id = m.bundle.bundle_id;
    b.trace.site_id = m.bundle.site_id;
    b.trace.handle = "H-" + m.bundle.bundle_id;
    b.trace.request_cores = m.bundle.request_cores;
    b.trace.request_minutes = m.bundle.request_minutes;
    b.trace.waste_fraction = m.bundle.waste_fraction();
    b.trace.submitted_at = now;
    handles_[b.trace.handle] = index;
    const std::string handle = b.trace.handle;
    if (config_.materialize_dir) {
      write_bundle_directory(*config_.materialize_dir, b.trace.bundle_id,
                             ArtifactSet{}, b.makefile);
    }
    bundles_.push_back(std::move(b));

    const Minute wait = sample_wait(m.bundle.site_id);
    record(now, "SUBMITTED bundle=" + m.bundle.bundle_id + " site=" +
                    m.bundle.site_id + " queue_wait=" + std::to_string(wait));
    push({now, 0, EventKind::Notify, index, 0, BackendEventKind::Accepted});
    push({now, 0, EventKind::Notify, index, 0, BackendEventKind::Queued});
    push({now + wait, 0, EventKind::BundleStart, index});
    return handle;
  }

  CancelResult cancel(const std::string& handle, Minute now) override {
    auto it = handles_.find(handle);
    if (it == handles_.end()) return {};
    SimBundle& b = bundles_[it->second];
    record(now, "CANCEL bundle=" + b.trace.bundle_id);
    if (b.phase == Phase::Done) {
      b.trace.cancelled = true;
      return {true, b.trace.artifacts};
    }
    const Minute stop = b.phase == Phase::Hung ? b.frozen_at : now;
    b.phase = Phase::Cancelled;
    b.trace.cancelled = true;
    b.trace.ended_at = stop;
    AccountingRecord acct;
    acct.bundle_id = b.trace.bundle_id;
    ArtifactSet artifacts;
    for (std::size_t i = 0; i < b.bundle.members.size(); ++i) {
      const std::string& id = b.bundle.members[i].job_id;
      AccountingRow row{id, AccountingState::Cancelled, 0, 0};
      bool sentinel = false;
      if (i < b.steps.size()) {
        const SimStep& s = b.steps[i];
        if (s.ended) {
          row.state = s.plan.state;
          row.elapsed_minutes = s.plan.elapsed();
          sentinel = s.sentinel;
        } else if (s.started) {
          row.elapsed_minutes = static_cast<int>(stop - s.plan.start);
        }
      }
      acct.rows.push_back(row);
      artifacts.sentinels[id] = sentinel;
      artifacts.outputs[id] = output_blob(row);
    }
    artifacts.accounting_text = acct.format();
    return {true, deliver_artifacts(b, std::move(artifacts))};
  }

 private:
  void push(Event e) {
    e.seq = next_seq_++;
    queue_.push(e);
  }

  void record(Minute t, const std::string& line) {
    result_.event_log.push_back("t=" + std::to_string(t) + " " + line);
  }

  Minute sample_wait(const std::string& site) {
    auto it = config_.queue_wait.find(site);
    if (it == config_.queue_wait.end()) return 0;
    const QueueWait& w = it->second;
    if (w.kind == QueueWait::Kind::Fixed) return w.lo;
    return rng_.uniform_int(w.lo, w.hi);
  }

  bool stalled(const std::string& site, Minute t) const {
    for (const auto& f : config_.faults) {
      if (f.kind == FaultKind::GlobalStall && f.target == site &&
          t >= f.from && t < f.to) {
        return true;
      }
    }
    return false;
  }

  static std::string output_blob(const AccountingRow& row) {
    return "job " + row.job_id + " " + std::string(to_string(row.state)) +
           " elapsed=" + std::to_string(row.elapsed_minutes) + "\n";
  }

  /// Round-trips through the filesystem when materialization is on.
  ArtifactSet deliver_artifacts(SimBundle& b, ArtifactSet artifacts) {
    if (config_.materialize_dir) {
      write_bundle_directory(*config_.materialize_dir, b.trace.bundle_id,
                             artifacts);
      std::vector<std::string> ids;
      for (const auto& m : b.bundle.members) ids.push_back(m.job_id);
      artifacts = read_bundle_directory(
          *config_.materialize_dir / b.trace.bundle_id, ids);
    }
    b.trace.artifacts = artifacts;
    return artifacts;
  }

  bool dead(const SimBundle& b) const {
    return b.phase == Phase::Cancelled || b.phase == Phase::Hung;
  }

  /// Execution events inside a stall window freeze the bundle for good.
  bool freeze_if_stalled(SimBundle& b, Minute now, const Event& e) {
    if (!stalled(b.trace.site_id, now)) return false;
    b.phase = Phase::Hung;
    b.frozen_at = now;
    b.trace.hung = true;
    record(now, "HUNG bundle=" + b.trace.bundle_id + " at=" +
                    std::string(to_string(e.kind)));
    return true;
  }

  void dispatch(const Event& e) {
    const Minute now = e.time;
    switch (e.kind) {
      case EventKind::Arrival: {
        const JobSpec& spec = workload_.jobs[e.index];
        record(now, "ARRIVAL job=" + spec.job_id);
        --pending_arrivals_;
        dispatcher_.ingest(spec, now);
        break;
      }
      case EventKind::Tick:
        dispatcher_.tick(now);
        if (pending_arrivals_ > 0 || !dispatcher_.all_terminal()) {
          push({now + config_.tick_minutes, 0, EventKind::Tick});
        }
        break;
      case EventKind::SiteToggle: {
        const SiteToggle& t = config_.toggles[e.index];
        record(now, "SITE_TOGGLE site=" + t.site_id +
                        (t.active ? " active" : " inactive"));
        dispatcher_.set_site_active(t.site_id, t.active, now);
        break;
      }
      case EventKind::BundleStart: {
        SimBundle& b = bundles_[e.index];
        if (dead(b) || freeze_if_stalled(b, now, e)) break;
        b.phase = Phase::Running;
        b.trace.started_at = now;
        record(now, "BUNDLE_START bundle=" + b.trace.bundle_id);
        const auto plan = plan_bundle_execution(b.bundle, b.graph,
                                                true_runtime_, now,
                                                config_.grace_minutes);
        Minute last = now;
        for (const auto& p : plan) b.steps.push_back(SimStep{p});
        // Topological order keeps a prerequisite's end ahead of a dependent's
        // start at equal times.
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < plan.size(); ++i) pos[plan[i].job_id] = i;
        for (const auto& id : b.graph.topological_order()) {
          const std::size_t i = pos.at(id);
          if (!plan[i].starts) continue;
          push({plan[i].start, 0, EventKind::StepStart, e.index, i});
          push({plan[i].end, 0, EventKind::StepEnd, e.index, i});
          last = std::max(last, plan[i].end);
        }
        push({now, 0, EventKind::Notify, e.index, 0,
              BackendEventKind::Running});
        push({last, 0, EventKind::BundleEnd, e.index});
        break;
      }
      case EventKind::StepStart: {
        SimBundle& b = bundles_[e.index];
        if (dead(b) || freeze_if_stalled(b, now, e)) break;
        SimStep& s = b.steps[e.step];
        s.started = true;
        record(now, "STEP_START bundle=" + b.trace.bundle_id +
                        " job=" + s.plan.job_id);
        break;
      }
      case EventKind::StepEnd: {
        SimBundle& b = bundles_[e.index];
        if (dead(b) || freeze_if_stalled(b, now, e)) break;
        SimStep& s = b.steps[e.step];
        s.ended = true;
        s.sentinel = s.plan.state == AccountingState::Completed;
        if (s.sentinel) {
          auto lost = lost_sentinels_.find(s.plan.job_id);
          if (lost != lost_sentinels_.end() && lost->second > 0) {
            --lost->second;
            s.sentinel = false;
          }
        }
        record(now, "STEP_END bundle=" + b.trace.bundle_id +
                        " job=" + s.plan.job_id + " state=" +
                        std::string(to_string(s.plan.state)) +
                        " elapsed=" + std::to_string(s.plan.elapsed()) +
                        (s.sentinel ? " sentinel" : " no-sentinel"));
        break;
      }
      case EventKind::BundleEnd: {
        SimBundle& b = bundles_[e.index];
        if (dead(b) || freeze_if_stalled(b, now, e)) break;
        b.phase = Phase::Done;
        b.trace.ended_at = now;
        AccountingRecord acct;
        acct.bundle_id = b.trace.bundle_id;
        ArtifactSet artifacts;
        for (const auto& s : b.steps) {
          AccountingRow row{s.plan.job_id, s.plan.state, s.plan.elapsed(), 0};
          acct.rows.push_back(row);
          artifacts.sentinels[s.plan.job_id] = s.sentinel;
          artifacts.outputs[s.plan.job_id] = output_blob(row);
        }
        artifacts.accounting_text = acct.format();
        deliver_artifacts(b, std::move(artifacts));
        record(now, "BUNDLE_END bundle=" + b.trace.bundle_id);
        push({now, 0, EventKind::Notify, e.index, 0,
              BackendEventKind::Finished});
        break;
      }
      case EventKind::Notify: {
        SimBundle& b = bundles_[e.index];
        const std::string kind(to_string(e.notify));
        if (stalled(b.trace.site_id, now)) {
          record(now, "NOTIFY_SUPPRESSED bundle=" + b.trace.bundle_id +
                          " event=" + kind);
          break;
        }
        record(now, "NOTIFY bundle=" + b.trace.bundle_id + " event=" + kind);
        BackendEvent ev{e.notify, std::nullopt};
        if (e.notify == BackendEventKind::Finished) {
          ev.artifacts = b.trace.artifacts;
        }
        dispatcher_.on_event(b.trace.handle, ev, now);
        break;
      }
    }
  }

  void finalize_trace(SimBundle& b) {
    const Minute stop = b.phase == Phase::Hung
                            ? b.frozen_at
                            : b.trace.ended_at.value_or(b.frozen_at);
    for (std::size_t i = 0; i < b.steps.size(); ++i) {
      const SimStep& s = b.steps[i];
      StepTrace t;
      t.job_id = s.plan.job_id;
      t.cores = s.plan.cores;
      t.started = s.started;
      t.start = s.plan.start;
      t.end = s.ended ? s.plan.end : stop;
      if (s.ended) t.state = s.plan.state;
      t.prerequisites = b.graph.prerequisites(t.job_id);
      b.trace.steps.push_back(std::move(t));
    }
  }

  const SimConfig& config_;
  const Workload& workload_;
  Rng rng_;
  CollectingSink sink_;
  SimResult result_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  std::size_t pending_arrivals_ = 0;
  std::vector<SimBundle> bundles_;
  std::map<std::string, std::size_t> handles_;
  std::map<std::string, int> true_runtime_;
  std::map<std::string, int> lost_sentinels_;
  // Declared last: its constructor may call back into the members above.
  Dispatcher dispatcher_;
};

}  // namespace

SimResult run(const SimConfig& config, const Workload& workload) {
  validate(config, workload);
  Simulation sim(config, workload);
  return sim.run();
}

Metrics compute_metrics(const SimResult& result) {
  Metrics m;
  for (const auto& b : result.bundles) {
    BundleMetrics bm;
    bm.bundle_id = b.bundle_id;
    bm.site_id = b.site_id;
    bm.n_jobs = b.steps.empty() ? 0 : b.steps.size();
    bm.request_cores = b.request_cores;
    bm.request_minutes = b.request_minutes;
    bm.waste_fraction = b.waste_fraction;
    ++m.bundles_per_site[b.site_id];
    if (b.artifacts) {
      std::optional<AccountingRecord> acct;
      try {
        acct = AccountingRecord::parse(b.artifacts->accounting_text);
      } catch (const AccountingParseError&) {
      }
      for (const auto& [id, sentinel] : b.artifacts->sentinels) {
        const AccountingRow* row = acct ? acct->find(id) : nullptr;
        switch (classify_step(id, row, sentinel).status) {
          case StepStatus::Completed: ++bm.completed; break;
          case StepStatus::Timeout: ++bm.timeout; break;
          case StepStatus::NodeFault: ++bm.node_fault; break;
          case StepStatus::Cancelled: ++bm.cancelled; break;
          case StepStatus::Failed: ++bm.failed; break;
        }
      }
    }
    if (b.started_at) {
      m.core_minutes_requested +=
          static_cast<std::int64_t>(b.request_cores) * b.request_minutes;
    }
    for (const auto& s : b.steps) {
      if (s.started) {
        m.core_minutes_consumed +=
            static_cast<std::int64_t>(s.cores) * (s.end - s.start);
      }
    }
    m.bundles.push_back(std::move(bm));
  }
  std::vector<double> turnaround;
  for (const auto& j : result.jobs) {
    ++m.jobs;
    if (j.state() == JobState::Completed) ++m.completed;
    if (j.state() == JobState::Errored) ++m.errored;
    if (!j.terminal()) ++m.live;
    if (j.finished_at()) {
      turnaround.push_back(
          static_cast<double>(*j.finished_at() - j.ingested_at()));
    }
  }
  if (!turnaround.empty()) {
    m.mean_turnaround =
        std::accumulate(turnaround.begin(), turnaround.end(), 0.0) /
        static_cast<double>(turnaround.size());
    m.p95_turnaround = percentile(turnaround, 0.95);
  }
  m.timeouts = result.counters.timeouts;
  m.rebinds = result.counters.rebinds;
  m.cancellations = result.counters.cancellations;
  m.node_faults = result.counters.node_faults;
  return m;
}

}  // namespace kimdispatch::sim
