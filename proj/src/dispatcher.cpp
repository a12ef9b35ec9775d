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

#include "kimdispatch/dispatcher.hpp"

#include <algorithm>
#include <stdexcept>

namespace kimdispatch {

std::string_view to_string(BackendEventKind k) {
  switch (k) {
    case BackendEventKind::Accepted: return "ACCEPTED";
    case BackendEventKind::Queued: return "QUEUED";
    case BackendEventKind::Running: return "RUNNING";
    case BackendEventKind::Finished: return "FINISHED";
  }
  return "?";
}

std::string step_command(const JobRecord& job) {
  return "cd " + job.job_id() + " && kim-run --test " + job.test_id() +
         " --model " + job.model_id() + " > " + std::string(kOutputName) +
         " 2>&1; touch " + std::string(kSentinelName);
}

Dispatcher::Dispatcher(std::vector<ExecutionSite> sites,
                       DispatcherOptions options, Backend& backend,
                       ResultsSink* sink, Logger logger)
    : options_(options),
      backend_(backend),
      sink_(sink),
      logger_(std::move(logger)),
      rng_(options.seed),
      registry_(std::move(sites)) {
  options_.policy.validate();
  if (options_.retry_cap < 1) {
    throw std::invalid_argument("dispatcher: retry cap must be >= 1");
  }
}

void Dispatcher::log(Minute now, const std::string& msg) const {
  if (logger_) logger_(now, msg);
}

JobRecord& Dispatcher::mutable_job(const std::string& job_id) {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw std::out_of_range("unknown job " + job_id);
  return it->second;
}

const JobRecord& Dispatcher::job(const std::string& job_id) const {
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) throw std::out_of_range("unknown job " + job_id);
  return it->second;
}

const JobRecord& Dispatcher::ingest(const JobSpec& spec, Minute now) {
  if (jobs_.contains(spec.job_id)) {
    throw std::invalid_argument("job " + spec.job_id + ": duplicate id");
  }
  auto [it, inserted] = jobs_.emplace(spec.job_id, JobRecord(spec, now));
  JobRecord& job = it->second;
  log(now, "INGEST job=" + job.job_id() + " cores=" +
               std::to_string(job.cores()) +
               " minutes=" + std::to_string(job.requested_minutes()));

  const auto site = registry_.bind(job.job_id(), job.requested_rect(),
                                   options_.policy.timeout_buffer_minutes, rng_);
  if (!site) {
    job.mark_errored(ErrorKind::Resource, now, "no compatible site");
    log(now, "ERROR job=" + job.job_id() + " kind=resource");
    finish(job, now);
    return job;
  }
  job.bind_to(*site, now, "intake");
  log(now, "BIND job=" + job.job_id() + " site=" + *site);
  form_bundles(*site, now);
  return job;
}

void Dispatcher::form_bundles(const std::string& site_id, Minute now) {
  const RectLookup lookup = [this](const std::string& id) {
    return job(id).requested_rect();
  };
  while (true) {
    auto b = registry_.try_form_bundle(site_id, lookup, options_.policy,
                                       /*force=*/false, now);
    if (!b) return;
    for (const auto& m : b->members) {
      mutable_job(m.job_id).mark_bundled(b->bundle_id, now);
    }
    if (!submit(std::move(*b), now)) return;
  }
}

void Dispatcher::submit_formed(std::vector<Bundle> bundles, Minute now) {
  for (auto& b : bundles) {
    for (const auto& m : b.members) {
      mutable_job(m.job_id).mark_bundled(b.bundle_id, now);
    }
    const std::string site = b.site_id;
    if (submit(std::move(b), now)) form_bundles(site, now);
  }
}

std::optional<std::string> Dispatcher::submit(Bundle bundle, Minute now) {
  std::vector<PlacedJob> placed;
  std::map<std::string, std::string> commands;
  for (const auto& m : bundle.members) {
    const JobRecord& j = job(m.job_id);
    if (j.state() != JobState::Bundled) {
      throw std::logic_error("submit: member " + m.job_id + " is not Bundled");
    }
    placed.push_back({m.job_id, m.placement});
    commands[m.job_id] = step_command(j);
  }
  StepGraph graph = build_step_graph(placed, options_.beneath_rule);
  const std::string makefile = emit_make(graph, commands);

  bundle.submitted_at = now;
  bundle.last_event_at = now;
  const BundleMaterials materials{bundle, graph, commands, makefile};
  auto handle = backend_.submit(materials, now);
  if (!handle) {
    ++counters_.rejections;
    std::vector<std::string> ids;
    for (const auto& m : bundle.members) {
      mutable_job(m.job_id).transition(JobState::Bound, now,
                                       "rejected bundle=" + bundle.bundle_id);
      ids.push_back(m.job_id);
    }
    registry_.enqueue_front(bundle.site_id, ids);
    log(now, "REJECTED bundle=" + bundle.bundle_id);
    return std::nullopt;
  }
  for (const auto& m : bundle.members) mutable_job(m.job_id).count_attempt();
  ++counters_.bundles_submitted;
  ++counters_.bundles_per_site[bundle.site_id];
  log(now, "SUBMIT bundle=" + bundle.bundle_id + " site=" + bundle.site_id +
               " handle=" + *handle +
               " request=" + std::to_string(bundle.request_cores) + "x" +
               std::to_string(bundle.request_minutes) +
               " jobs=" + std::to_string(bundle.members.size()));
  in_flight_.emplace(*handle, InFlightBundle{std::move(bundle), std::move(graph)});
  return handle;
}

void Dispatcher::on_event(const std::string& handle, const BackendEvent& event,
                          Minute now) {
  auto it = in_flight_.find(handle);
  if (it == in_flight_.end()) {
    log(now, std::string(retired_.contains(handle) ? "IGNORED" : "UNKNOWN") +
                 " event=" + std::string(to_string(event.kind)) +
                 " handle=" + handle);
    return;
  }
  it->second.bundle.last_event_at = now;
  switch (event.kind) {
    case BackendEventKind::Accepted:
    case BackendEventKind::Queued:
      break;
    case BackendEventKind::Running:
      for (const auto& m : it->second.bundle.members) {
        JobRecord& j = mutable_job(m.job_id);
        if (j.state() == JobState::Bundled) {
          j.transition(JobState::Running, now, "");
        }
      }
      break;
    case BackendEventKind::Finished:
      analyze_bundle(handle, event.artifacts.value_or(ArtifactSet{}), now);
      break;
  }
}

void Dispatcher::retire(const std::string& handle) {
  in_flight_.erase(handle);
  retired_.insert(handle);
}

std::vector<StepOutcome> Dispatcher::analyze_bundle(
    const std::string& handle, const ArtifactSet& artifacts, Minute now) {
  auto it = in_flight_.find(handle);
  if (it == in_flight_.end()) {
    throw std::invalid_argument("analyze_bundle: unknown handle " + handle);
  }
  const Bundle bundle = std::move(it->second.bundle);
  retire(handle);

  std::optional<AccountingRecord> accounting;
  try {
    accounting = AccountingRecord::parse(artifacts.accounting_text);
  } catch (const AccountingParseError& e) {
    log(now, "BAD_ACCOUNTING bundle=" + bundle.bundle_id + " " + e.what());
  }

  std::vector<StepOutcome> outcomes;
  std::vector<std::string> touched;
  for (const auto& m : bundle.members) {
    JobRecord& j = mutable_job(m.job_id);
    if (j.terminal()) continue;
    const AccountingRow* row = accounting ? accounting->find(m.job_id) : nullptr;
    auto sentinel = artifacts.sentinels.find(m.job_id);
    StepOutcome outcome = classify_step(
        m.job_id, row,
        sentinel != artifacts.sentinels.end() && sentinel->second);
    outcomes.push_back(outcome);
    j.set_last_elapsed(outcome.elapsed_minutes);
    log(now, "OUTCOME bundle=" + bundle.bundle_id + " job=" + m.job_id +
                 " status=" + std::string(to_string(outcome.status)) +
                 " elapsed=" + std::to_string(outcome.elapsed_minutes));

    const auto ensure_running = [&] {
      if (j.state() == JobState::Bundled) {
        j.transition(JobState::Running, now, "inferred from bundle results");
      }
    };
    switch (outcome.status) {
      case StepStatus::Completed:
        ensure_running();
        j.transition(JobState::Completed, now,
                     "bundle=" + bundle.bundle_id +
                         " elapsed=" + std::to_string(outcome.elapsed_minutes));
        finish(j, now);
        break;
      case StepStatus::Failed:
        ensure_running();
        j.mark_errored(ErrorKind::JobFailure, now,
                       "exit=" + std::to_string(outcome.exit_code));
        finish(j, now);
        break;
      case StepStatus::Timeout:
        ensure_running();
        timeout_impl(j, now, touched);
        break;
      case StepStatus::NodeFault:
        ++counters_.node_faults;
        requeue(j, now, "node fault in bundle=" + bundle.bundle_id, touched);
        break;
      case StepStatus::Cancelled:
        ++counters_.cancelled_steps;
        requeue(j, now, "cancelled in bundle=" + bundle.bundle_id, touched);
        break;
    }
  }
  form_touched(std::move(touched), now);
  return outcomes;
}

void Dispatcher::handle_timeout(const std::string& job_id, Minute now) {
  JobRecord& j = mutable_job(job_id);
  if (j.terminal()) return;
  std::vector<std::string> touched;
  timeout_impl(j, now, touched);
  form_touched(std::move(touched), now);
}

void Dispatcher::timeout_impl(JobRecord& job, Minute now,
                              std::vector<std::string>& touched_sites) {
  ++counters_.timeouts;
  job.count_timeout();
  job.double_request();
  log(now, "TIMEOUT job=" + job.job_id() +
               " new_request=" + std::to_string(job.requested_minutes()));
  requeue(job, now,
          "timeout; request doubled to " +
              std::to_string(job.requested_minutes()),
          touched_sites);
}

void Dispatcher::requeue(JobRecord& job, Minute now, const std::string& reason,
                         std::vector<std::string>& touched_sites) {
  if (job.attempts() >= options_.retry_cap) {
    job.mark_errored(ErrorKind::Flaky, now,
                     reason + "; retry cap " +
                         std::to_string(options_.retry_cap) + " reached");
    log(now, "ERROR job=" + job.job_id() + " kind=flaky");
    finish(job, now);
    return;
  }
  const std::string site = *job.bound_site();
  if (accommodates(registry_.site(site), job.requested_rect(),
                   options_.policy.timeout_buffer_minutes)) {
    job.bind_to(site, now, reason);
    registry_.enqueue_back(site, job.job_id());
    touched_sites.push_back(site);
    log(now, "REQUEUE job=" + job.job_id() + " site=" + site);
    return;
  }
  rebind_or_error(job, now, reason, touched_sites);
}

void Dispatcher::rebind_or_error(JobRecord& job, Minute now,
                                 const std::string& reason,
                                 std::vector<std::string>& touched_sites) {
  const auto site = registry_.bind(job.job_id(), job.requested_rect(),
                                   options_.policy.timeout_buffer_minutes, rng_);
  if (!site) {
    job.mark_errored(ErrorKind::Resource, now, reason + "; no compatible site");
    log(now, "ERROR job=" + job.job_id() + " kind=resource");
    finish(job, now);
    return;
  }
  if (job.bound_site() != site) ++counters_.rebinds;
  job.bind_to(*site, now, reason + "; rebound");
  touched_sites.push_back(*site);
  log(now, "REBIND job=" + job.job_id() + " site=" + *site);
}

void Dispatcher::form_touched(std::vector<std::string> sites, Minute now) {
  std::sort(sites.begin(), sites.end());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  for (const auto& s : sites) form_bundles(s, now);
}

void Dispatcher::finish(JobRecord& job, Minute now) {
  (void)now;
  if (!sink_) return;
  ResultEnvelope env;
  env.job_id = job.job_id();
  env.test_id = job.test_id();
  env.model_id = job.model_id();
  env.status = job.state() == JobState::Completed
                   ? "completed"
                   : "error:" + std::string(to_string(job.error()));
  env.elapsed_minutes = job.last_elapsed_minutes();
  env.attempts = job.attempts();
  sink_->deliver(env);
}

std::vector<std::string> Dispatcher::monitor(Minute now) {
  std::vector<std::string> stale;
  for (const auto& [handle, fb] : in_flight_) {
    const double limit =
        options_.policy.heartbeat_factor * fb.bundle.request_minutes;
    if (static_cast<double>(now - fb.bundle.last_event_at) > limit) {
      stale.push_back(handle);
    }
  }
  std::vector<std::string> cancelled;
  for (const auto& handle : stale) {
    CancelResult res = backend_.cancel(handle, now);
    if (!res.accepted) {
      in_flight_.at(handle).cancel_pending = true;
      log(now, "CANCEL_FAILED handle=" + handle);
      continue;
    }
    ++counters_.cancellations;
    cancelled.push_back(handle);
    log(now, "CANCEL handle=" + handle + " bundle=" +
                 in_flight_.at(handle).bundle.bundle_id + " silent_since=" +
                 std::to_string(in_flight_.at(handle).bundle.last_event_at));
    if (res.artifacts) {
      analyze_bundle(handle, *res.artifacts, now);
      continue;
    }
    const Bundle bundle = std::move(in_flight_.at(handle).bundle);
    retire(handle);
    std::vector<std::string> touched;
    for (const auto& m : bundle.members) {
      JobRecord& j = mutable_job(m.job_id);
      if (j.terminal()) continue;
      ++counters_.cancelled_steps;
      requeue(j, now, "heartbeat cancel of bundle=" + bundle.bundle_id,
              touched);
    }
    form_touched(std::move(touched), now);
  }
  return cancelled;
}

std::vector<std::string> Dispatcher::flush(Minute now) {
  const RectLookup lookup = [this](const std::string& id) {
    return job(id).requested_rect();
  };
  auto bundles = registry_.flush_due_sites(now, options_.policy, lookup);
  std::vector<std::string> ids;
  for (const auto& b : bundles) ids.push_back(b.bundle_id);
  if (!bundles.empty()) submit_formed(std::move(bundles), now);
  return ids;
}

void Dispatcher::tick(Minute now) {
  monitor(now);
  flush(now);
}

void Dispatcher::set_site_active(const std::string& site_id, bool active,
                                 Minute now) {
  if (!registry_.contains(site_id)) {
    throw std::out_of_range("unknown site " + site_id);
  }
  registry_.set_active(site_id, active);
  log(now, std::string(active ? "ACTIVATE" : "DEACTIVATE") + " site=" + site_id);
  if (active) return;
  std::vector<std::string> touched;
  for (const auto& id : registry_.drain_queue(site_id)) {
    rebind_or_error(mutable_job(id), now, "site " + site_id + " deactivated",
                    touched);
  }
  form_touched(std::move(touched), now);
}

bool Dispatcher::all_terminal() const {
  return terminal_count() == jobs_.size();
}

std::size_t Dispatcher::terminal_count() const {
  return static_cast<std::size_t>(
      std::count_if(jobs_.begin(), jobs_.end(),
                    [](const auto& kv) { return kv.second.terminal(); }));
}

std::vector<std::string> Dispatcher::audit() const {
  std::vector<std::string> problems;
  std::map<std::string, int> places;
  for (const ExecutionSite* s : registry_.sites()) {
    for (const auto& id : s->queue) {
      ++places[id];
      const JobRecord& j = job(id);
      if (j.state() != JobState::Bound || j.bound_site() != s->site_id) {
        problems.push_back("queued job " + id + " at " + s->site_id +
                           " is " + std::string(to_string(j.state())));
      }
    }
  }
  for (const auto& [handle, fb] : in_flight_) {
    for (const auto& m : fb.bundle.members) {
      const JobRecord& j = job(m.job_id);
      if (j.terminal()) {
        problems.push_back("terminal job " + m.job_id + " in flight");
        continue;
      }
      ++places[m.job_id];
      if (j.state() != JobState::Bundled && j.state() != JobState::Running) {
        problems.push_back("in-flight job " + m.job_id + " is " +
                           std::string(to_string(j.state())));
      }
    }
  }
  for (const auto& [id, j] : jobs_) {
    const int n = places.contains(id) ? places.at(id) : 0;
    if (j.terminal() ? n != 0 : n != 1) {
      problems.push_back("job " + id + " (" + std::string(to_string(j.state())) +
                         ") held in " + std::to_string(n) + " places");
    }
    long long m = j.original_minutes();
    while (m < j.requested_minutes()) m *= 2;
    if (m != j.requested_minutes()) {
      problems.push_back("job " + id + " request is not original x 2^d");
    }
  }
  return problems;
}

}  // namespace kimdispatch
