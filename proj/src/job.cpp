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

#include "kimdispatch/job.hpp"

#include <stdexcept>

namespace kimdispatch {

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Pending: return "Pending";
    case JobState::Bound: return "Bound";
    case JobState::Bundled: return "Bundled";
    case JobState::Running: return "Running";
    case JobState::Completed: return "Completed";
    case JobState::Errored: return "Errored";
  }
  return "?";
}

std::string_view to_string(ErrorKind e) {
  switch (e) {
    case ErrorKind::None: return "none";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::JobFailure: return "job";
    case ErrorKind::Flaky: return "flaky";
  }
  return "?";
}

bool transition_allowed(JobState from, JobState to) {
  using S = JobState;
  switch (from) {
    case S::Pending: return to == S::Bound || to == S::Errored;
    case S::Bound:
      return to == S::Bound || to == S::Bundled || to == S::Errored;
    case S::Bundled:
      return to == S::Running || to == S::Bound || to == S::Errored;
    case S::Running:
      return to == S::Completed || to == S::Errored || to == S::Bound;
    case S::Completed:
    case S::Errored: return false;
  }
  return false;
}

bool valid_identifier(std::string_view id) {
  if (id.empty() || id == "all") return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
    if (!ok) return false;
  }
  return id != "." && id != "..";
}

JobRecord::JobRecord(const JobSpec& spec, Minute now)
    : job_id_(spec.job_id),
      test_id_(spec.test_id),
      model_id_(spec.model_id),
      cores_(spec.cores),
      requested_minutes_(spec.requested_minutes),
      original_minutes_(spec.requested_minutes),
      true_runtime_minutes_(spec.true_runtime_minutes),
      ingested_at_(now) {
  if (!valid_identifier(spec.job_id)) {
    throw std::invalid_argument("job: invalid job_id '" + spec.job_id + "'");
  }
  if (spec.cores < 1 || spec.requested_minutes < 1) {
    throw std::invalid_argument("job " + spec.job_id +
                                ": cores and minutes must be positive");
  }
}

int JobRecord::doublings() const {
  int d = 0;
  long long m = original_minutes_;
  while (m < requested_minutes_) {
    m *= 2;
    ++d;
  }
  return d;
}

void JobRecord::transition(JobState to, Minute now, std::string detail) {
  if (!transition_allowed(state_, to)) {
    throw std::logic_error("job " + job_id_ + ": illegal transition " +
                           std::string(to_string(state_)) + " -> " +
                           std::string(to_string(to)));
  }
  history_.push_back({now, state_, to, std::move(detail)});
  state_ = to;
  if (terminal()) finished_at_ = now;
  if (to != JobState::Bundled && to != JobState::Running) bundle_id_.reset();
}

void JobRecord::bind_to(const std::string& site_id, Minute now,
                        std::string detail) {
  if (bound_site_ && *bound_site_ != site_id) ++rebinds_;
  bound_site_ = site_id;
  transition(JobState::Bound, now, "site=" + site_id +
                                       (detail.empty() ? "" : " " + detail));
}

void JobRecord::mark_bundled(const std::string& bundle_id, Minute now) {
  transition(JobState::Bundled, now, "bundle=" + bundle_id);
  bundle_id_ = bundle_id;
}

void JobRecord::mark_errored(ErrorKind kind, Minute now, std::string detail) {
  error_ = kind;
  transition(JobState::Errored, now,
             "error=" + std::string(to_string(kind)) +
                 (detail.empty() ? "" : " " + detail));
}

void JobRecord::double_request() {
  if (requested_minutes_ > (1 << 29)) {
    throw std::overflow_error("job " + job_id_ + ": request overflow");
  }
  requested_minutes_ *= 2;
}

}  // namespace kimdispatch
