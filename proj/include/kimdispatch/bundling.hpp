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

// Execution sites, their FIFO job queues, random binding and online bundle
// formation.

#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kimdispatch/packing.hpp"
#include "kimdispatch/random.hpp"

namespace kimdispatch {

/// Virtual time in integer minutes.
using Minute = std::int64_t;

struct ExecutionSite {
  std::string site_id;
  int cores_per_node = 1;
  int max_walltime_minutes = 1;
  bool node_sharing = false;  // reporting only
  bool active = true;
  std::deque<std::string> queue;
  Minute last_attempt_at = 0;
};

struct BundlePolicy {
  int min_jobs = 5;
  double min_fill = 0.8;
  Minute flush_interval_minutes = 60;
  int timeout_buffer_minutes = 5;
  double heartbeat_factor = 2.0;

  /// Throws std::invalid_argument on out-of-range knobs.
  void validate() const;
  bool sufficient(std::size_t packed_jobs, double fill) const {
    return static_cast<int>(packed_jobs) >= min_jobs || fill >= min_fill;
  }

  /// `min_jobs=5,min_fill=0.8,flush=60,buffer=5,heartbeat=2`; any subset of
  /// keys, unspecified keys keep the values of `base`.
  static BundlePolicy parse(std::string_view text, BundlePolicy base);
  static BundlePolicy parse(std::string_view text);
  std::string to_string() const;
};

struct BundleMember {
  std::string job_id;
  Placement placement;  // height includes the timeout buffer
};

struct Bundle {
  std::string bundle_id;
  std::string site_id;
  std::vector<BundleMember> members;
  int request_cores = 0;
  int request_minutes = 0;
  Minute submitted_at = 0;
  Minute last_event_at = 0;

  std::vector<Placement> placements() const;
  double waste_fraction() const;
};

/// Job id -> requested (unbuffered) rect.
using RectLookup = std::function<ResourceRect(const std::string&)>;

inline ResourceRect buffered(const ResourceRect& rect, int buffer_minutes) {
  return ResourceRect{rect.cores, rect.minutes + buffer_minutes};
}

/// Active, and the buffered rect fits a fresh bin.
bool accommodates(const ExecutionSite& site, const ResourceRect& rect,
                  int buffer_minutes);

class SiteRegistry {
 public:
  SiteRegistry() = default;
  /// Throws std::invalid_argument on duplicate ids or bad dimensions.
  explicit SiteRegistry(std::vector<ExecutionSite> sites, Minute now = 0);

  bool contains(const std::string& site_id) const;
  const ExecutionSite& site(const std::string& site_id) const;
  /// Sites in id order.
  std::vector<const ExecutionSite*> sites() const;

  std::vector<std::string> compatible_sites(const ResourceRect& rect,
                                            int buffer_minutes) const;

  /// Picks one compatible active site uniformly at random and appends the job
  /// to its queue. std::nullopt when none is compatible.
  std::optional<std::string> bind(const std::string& job_id,
                                  const ResourceRect& rect, int buffer_minutes,
                                  Rng& rng);

  /// Online packing of the site's queue in FIFO order. Jobs that do not fit
  /// keep their queue position. Stops at sufficiency; with `force` any
  /// non-empty packing forms a bundle. Packed jobs leave the queue only when
  /// a bundle is returned.
  std::optional<Bundle> try_form_bundle(const std::string& site_id,
                                        const RectLookup& lookup,
                                        const BundlePolicy& policy, bool force,
                                        Minute now);

  /// Forced formation on each active site whose last attempt is at least
  /// `flush_interval_minutes` old.
  std::vector<Bundle> flush_due_sites(Minute now, const BundlePolicy& policy,
                                      const RectLookup& lookup);

  void enqueue_back(const std::string& site_id, const std::string& job_id);
  /// Prepends `job_ids` keeping their relative order.
  void enqueue_front(const std::string& site_id,
                     const std::vector<std::string>& job_ids);
  bool remove_from_queue(const std::string& site_id,
                         const std::string& job_id);
  std::vector<std::string> drain_queue(const std::string& site_id);
  void set_active(const std::string& site_id, bool active);

 private:
  ExecutionSite& mutable_site(const std::string& site_id);

  std::map<std::string, ExecutionSite> sites_;
  std::uint64_t next_bundle_ = 1;
};

}  // namespace kimdispatch
