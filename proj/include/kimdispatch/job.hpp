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

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kimdispatch/bundling.hpp"
#include "kimdispatch/packing.hpp"

namespace kimdispatch {

enum class JobState { Pending, Bound, Bundled, Running, Completed, Errored };

enum class ErrorKind {
  None,
  Resource,    // request exceeds every available site
  JobFailure,  // the job ran to its end and reported failure
  Flaky,       // retry cap exhausted on hardware-class faults
};

std::string_view to_string(JobState s);
std::string_view to_string(ErrorKind e);

/// The lifecycle edges a JobRecord may take.
bool transition_allowed(JobState from, JobState to);

/// A job as handed to the dispatcher. `true_runtime_minutes` is simulation
/// ground truth and is never consulted by scheduling logic.
struct JobSpec {
  std::string job_id;
  std::string test_id;
  std::string model_id;
  int cores = 1;
  int requested_minutes = 1;
  int true_runtime_minutes = 1;
  Minute arrival_minute = 0;
};

/// Job ids double as make targets and directory names.
bool valid_identifier(std::string_view id);

struct HistoryEntry {
  Minute time = 0;
  JobState from = JobState::Pending;
  JobState to = JobState::Pending;
  std::string detail;
};

class JobRecord {
 public:
  JobRecord(const JobSpec& spec, Minute now);

  const std::string& job_id() const { return job_id_; }
  const std::string& test_id() const { return test_id_; }
  const std::string& model_id() const { return model_id_; }
  int cores() const { return cores_; }
  int requested_minutes() const { return requested_minutes_; }
  int original_minutes() const { return original_minutes_; }
  int true_runtime_minutes() const { return true_runtime_minutes_; }
  ResourceRect requested_rect() const { return {cores_, requested_minutes_}; }

  JobState state() const { return state_; }
  bool terminal() const {
    return state_ == JobState::Completed || state_ == JobState::Errored;
  }
  ErrorKind error() const { return error_; }
  const std::optional<std::string>& bound_site() const { return bound_site_; }
  const std::optional<std::string>& bundle_id() const { return bundle_id_; }
  int attempts() const { return attempts_; }
  int timeouts() const { return timeouts_; }
  int rebinds() const { return rebinds_; }
  /// log2(requested / original).
  int doublings() const;
  Minute ingested_at() const { return ingested_at_; }
  std::optional<Minute> finished_at() const { return finished_at_; }
  int last_elapsed_minutes() const { return last_elapsed_; }
  const std::vector<HistoryEntry>& history() const { return history_; }

  /// Throws std::logic_error on a disallowed edge.
  void transition(JobState to, Minute now, std::string detail);
  void bind_to(const std::string& site_id, Minute now, std::string detail);
  void mark_bundled(const std::string& bundle_id, Minute now);
  void mark_errored(ErrorKind kind, Minute now, std::string detail);
  void double_request();
  void count_attempt() { ++attempts_; }
  void count_timeout() { ++timeouts_; }
  void set_last_elapsed(int minutes) { last_elapsed_ = minutes; }

 private:
  std::string job_id_;
  std::string test_id_;
  std::string model_id_;
  int cores_;
  int requested_minutes_;
  int original_minutes_;
  int true_runtime_minutes_;
  JobState state_ = JobState::Pending;
  ErrorKind error_ = ErrorKind::None;
  std::optional<std::string> bound_site_;
  std::optional<std::string> bundle_id_;
  int attempts_ = 0;
  int timeouts_ = 0;
  int rebinds_ = 0;
  int last_elapsed_ = 0;
  Minute ingested_at_;
  std::optional<Minute> finished_at_;
  std::vector<HistoryEntry> history_;
};

}  // namespace kimdispatch
