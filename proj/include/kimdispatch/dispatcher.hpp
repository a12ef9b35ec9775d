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

// Job lifecycle owner: intake, binding, bundle submission to a backend,
// outcome analysis, timeout doubling, rebinding, heartbeat monitoring and
// site activation control.
//
// All mutation goes through one logical event loop; callers pass the current
// virtual time into every entry point.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kimdispatch/accounting.hpp"
#include "kimdispatch/bundling.hpp"
#include "kimdispatch/job.hpp"
#include "kimdispatch/stepgraph.hpp"

namespace kimdispatch {

enum class BackendEventKind { Accepted, Queued, Running, Finished };

std::string_view to_string(BackendEventKind k);

struct BackendEvent {
  BackendEventKind kind = BackendEventKind::Accepted;
  /// Present on Finished.
  std::optional<ArtifactSet> artifacts;
};

struct BundleMaterials {
  const Bundle& bundle;
  const StepGraph& graph;
  const std::map<std::string, std::string>& commands;
  const std::string& makefile;
};

struct CancelResult {
  bool accepted = false;
  /// Whatever the bundle directory held when the job was cancelled.
  std::optional<ArtifactSet> artifacts;
};

/// The remote-execution role. submit() returns a handle, or std::nullopt when
/// the backend rejects the bundle.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::optional<std::string> submit(const BundleMaterials& materials,
                                            Minute now) = 0;
  virtual CancelResult cancel(const std::string& handle, Minute now) = 0;
};

struct ResultEnvelope {
  std::string job_id;
  std::string test_id;
  std::string model_id;
  std::string status;  // "completed" or "error:<kind>"
  int elapsed_minutes = 0;
  int attempts = 0;
};

class ResultsSink {
 public:
  virtual ~ResultsSink() = default;
  virtual void deliver(const ResultEnvelope& envelope) = 0;
};

class CollectingSink : public ResultsSink {
 public:
  void deliver(const ResultEnvelope& envelope) override {
    envelopes.push_back(envelope);
  }
  std::vector<ResultEnvelope> envelopes;
};

struct DispatcherOptions {
  BundlePolicy policy;
  int retry_cap = 10;
  std::uint64_t seed = 1;
  BeneathRule beneath_rule = BeneathRule::CoreOverlap;
};

struct DispatcherCounters {
  int bundles_submitted = 0;
  int rejections = 0;
  int timeouts = 0;
  int rebinds = 0;
  int node_faults = 0;
  int cancelled_steps = 0;
  int cancellations = 0;
  std::map<std::string, int> bundles_per_site;
};

struct InFlightBundle {
  Bundle bundle;
  StepGraph graph;
  bool cancel_pending = false;
};

/// Default make recipe for a job: run it inside its step directory and drop
/// the sentinel when it concludes.
std::string step_command(const JobRecord& job);

class Dispatcher {
 public:
  using Logger = std::function<void(Minute, const std::string&)>;

  Dispatcher(std::vector<ExecutionSite> sites, DispatcherOptions options,
             Backend& backend, ResultsSink* sink = nullptr,
             Logger logger = {});

  /// Creates the record and binds it. Throws std::invalid_argument on a
  /// malformed spec or a duplicate job id.
  const JobRecord& ingest(const JobSpec& spec, Minute now);

  /// Submits a formed bundle whose members are Bundled. Returns the backend
  /// handle, or std::nullopt after re-queueing the members on rejection.
  std::optional<std::string> submit(Bundle bundle, Minute now);

  void on_event(const std::string& handle, const BackendEvent& event,
                Minute now);

  /// Applies the returned directory contents to every non-terminal member and
  /// retires the bundle.
  std::vector<StepOutcome> analyze_bundle(const std::string& handle,
                                          const ArtifactSet& artifacts,
                                          Minute now);

  /// Doubles the request and re-queues, rebinds or errors the job.
  void handle_timeout(const std::string& job_id, Minute now);

  /// Cancels every in-flight bundle silent for more than
  /// heartbeat_factor x request_minutes. Returns the cancelled handles.
  std::vector<std::string> monitor(Minute now);

  /// Periodic flush of idle sites.
  std::vector<std::string> flush(Minute now);

  /// monitor() then flush().
  void tick(Minute now);

  /// Throws std::out_of_range for an unknown site.
  void set_site_active(const std::string& site_id, bool active, Minute now);

  const JobRecord& job(const std::string& job_id) const;
  const std::map<std::string, JobRecord>& jobs() const { return jobs_; }
  const SiteRegistry& sites() const { return registry_; }
  const std::map<std::string, InFlightBundle>& in_flight() const {
    return in_flight_;
  }
  const DispatcherCounters& counters() const { return counters_; }
  const DispatcherOptions& options() const { return options_; }
  bool all_terminal() const;
  std::size_t terminal_count() const;

  /// Conservation audit: every non-terminal job sits in exactly one place
  /// (its site queue or one in-flight bundle) and no terminal job sits
  /// anywhere. Returns human-readable violations; empty when sound.
  std::vector<std::string> audit() const;

 private:
  JobRecord& mutable_job(const std::string& job_id);
  void log(Minute now, const std::string& msg) const;
  void form_bundles(const std::string& site_id, Minute now);
  void submit_formed(std::vector<Bundle> bundles, Minute now);
  /// Sends a job that needs another attempt back to a queue.
  void requeue(JobRecord& job, Minute now, const std::string& reason,
               std::vector<std::string>& touched_sites);
  void rebind_or_error(JobRecord& job, Minute now, const std::string& reason,
                       std::vector<std::string>& touched_sites);
  void finish(JobRecord& job, Minute now);
  void retire(const std::string& handle);
  void timeout_impl(JobRecord& job, Minute now,
                    std::vector<std::string>& touched_sites);
  void form_touched(std::vector<std::string> sites, Minute now);

  DispatcherOptions options_;
  Backend& backend_;
  ResultsSink* sink_;
  Logger logger_;
  Rng rng_;
  SiteRegistry registry_;
  std::map<std::string, JobRecord> jobs_;
  std::map<std::string, InFlightBundle> in_flight_;
  std::set<std::string> retired_;
  DispatcherCounters counters_;
};

}  // namespace kimdispatch
