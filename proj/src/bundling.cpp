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

#include "kimdispatch/bundling.hpp"

#include "kimdispatch/text.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace kimdispatch {


void BundlePolicy::validate() const {
  if (min_jobs < 1) throw std::invalid_argument("policy: min_jobs must be >= 1");
  if (!(min_fill >= 0.0 && min_fill <= 1.0)) {
    throw std::invalid_argument("policy: min_fill must lie in [0, 1]");
  }
  if (flush_interval_minutes < 1) {
    throw std::invalid_argument("policy: flush must be >= 1 minute");
  }
  if (timeout_buffer_minutes < 0) {
    throw std::invalid_argument("policy: buffer must be >= 0");
  }
  if (!(heartbeat_factor > 1.0)) {
    throw std::invalid_argument("policy: heartbeat factor must exceed 1");
  }
}

BundlePolicy BundlePolicy::parse(std::string_view spec) {
  return parse(spec, BundlePolicy{});
}

BundlePolicy BundlePolicy::parse(std::string_view spec, BundlePolicy base) {
  BundlePolicy out = base;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto item = text::trim(spec.substr(
        pos, comma == std::string_view::npos ? std::string_view::npos
                                             : comma - pos));
    pos = comma == std::string_view::npos ? spec.size() + 1 : comma + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("policy: expected key=value, got '" + item +
                                  "'");
    }
    const auto key = text::trim(std::string_view(item).substr(0, eq));
    const auto value = std::string_view(item).substr(eq + 1);
    const std::string what = "policy " + key;
    if (key == "min_jobs") {
      out.min_jobs = static_cast<int>(text::parse_integer(value, what));
    } else if (key == "min_fill") {
      out.min_fill = text::parse_real(value, what);
    } else if (key == "flush") {
      out.flush_interval_minutes = text::parse_integer(value, what);
    } else if (key == "buffer") {
      out.timeout_buffer_minutes = static_cast<int>(text::parse_integer(value, what));
    } else if (key == "heartbeat") {
      out.heartbeat_factor = text::parse_real(value, what);
    } else {
      throw std::invalid_argument("policy: unknown key '" + key + "'");
    }
  }
  out.validate();
  return out;
}

std::string BundlePolicy::to_string() const {
  return "min_jobs=" + std::to_string(min_jobs) +
         ",min_fill=" + text::format_real(min_fill) +
         ",flush=" + std::to_string(flush_interval_minutes) +
         ",buffer=" + std::to_string(timeout_buffer_minutes) +
         ",heartbeat=" + text::format_real(heartbeat_factor);
}

std::vector<Placement> Bundle::placements() const {
  std::vector<Placement> out;
  out.reserve(members.size());
  for (const auto& m : members) out.push_back(m.placement);
  return out;
}

double Bundle::waste_fraction() const {
  return kimdispatch::waste_fraction(placements());
}

bool accommodates(const ExecutionSite& site, const ResourceRect& rect,
                  int buffer_minutes) {
  return site.active && rect.cores <= site.cores_per_node &&
         static_cast<long long>(rect.minutes) + buffer_minutes <=
             site.max_walltime_minutes;
}

SiteRegistry::SiteRegistry(std::vector<ExecutionSite> sites, Minute now) {
  for (auto& s : sites) {
    if (s.site_id.empty()) {
      throw std::invalid_argument("site: empty site_id");
    }
    if (s.cores_per_node < 1 || s.max_walltime_minutes < 1) {
      throw std::invalid_argument("site " + s.site_id +
                                  ": dimensions must be positive");
    }
    s.last_attempt_at = now;
    const std::string id = s.site_id;
    if (!sites_.emplace(id, std::move(s)).second) {
      throw std::invalid_argument("site " + id + ": duplicate id");
    }
  }
}

bool SiteRegistry::contains(const std::string& site_id) const {
  return sites_.contains(site_id);
}

const ExecutionSite& SiteRegistry::site(const std::string& site_id) const {
  auto it = sites_.find(site_id);
  if (it == sites_.end()) {
    throw std::out_of_range("unknown site " + site_id);
  }
  return it->second;
}

ExecutionSite& SiteRegistry::mutable_site(const std::string& site_id) {
  auto it = sites_.find(site_id);
  if (it == sites_.end()) {
    throw std::out_of_range("unknown site " + site_id);
  }
  return it->second;
}

std::vector<const ExecutionSite*> SiteRegistry::sites() const {
  std::vector<const ExecutionSite*> out;
  out.reserve(sites_.size());
  for (const auto& [id, s] : sites_) out.push_back(&s);
  return out;
}

std::vector<std::string> SiteRegistry::compatible_sites(
    const ResourceRect& rect, int buffer_minutes) const {
  std::vector<std::string> out;
  for (const auto& [id, s] : sites_) {
    if (accommodates(s, rect, buffer_minutes)) out.push_back(id);
  }
  return out;
}

std::optional<std::string> SiteRegistry::bind(const std::string& job_id,
                                              const ResourceRect& rect,
                                              int buffer_minutes, Rng& rng) {
  const auto candidates = compatible_sites(rect, buffer_minutes);
  if (candidates.empty()) return std::nullopt;
  const auto& chosen = candidates[rng.uniform_index(candidates.size())];
  sites_.at(chosen).queue.push_back(job_id);
  return chosen;
}

std::optional<Bundle> SiteRegistry::try_form_bundle(const std::string& site_id,
                                                    const RectLookup& lookup,
                                                    const BundlePolicy& policy,
                                                    bool force, Minute now) {
  ExecutionSite& s = mutable_site(site_id);
  if (!s.active) return std::nullopt;
  s.last_attempt_at = now;

  PackingBin bin(s.cores_per_node, s.max_walltime_minutes);
  std::vector<BundleMember> members;
  std::vector<std::size_t> packed_positions;
  bool enough = false;
  for (std::size_t i = 0; i < s.queue.size() && !enough; ++i) {
    const ResourceRect rect =
        buffered(lookup(s.queue[i]), policy.timeout_buffer_minutes);
    auto placed = bin.insert(rect);
    if (!placed) continue;
    members.push_back({s.queue[i], *placed});
    packed_positions.push_back(i);
    enough = policy.sufficient(members.size(), bin.fill_fraction());
  }
  if (members.empty() || !(enough || force)) return std::nullopt;

  for (auto it = packed_positions.rbegin(); it != packed_positions.rend();
       ++it) {
    s.queue.erase(s.queue.begin() + static_cast<std::ptrdiff_t>(*it));
  }
  Bundle b;
  char id[32];
  std::snprintf(id, sizeof id, "B%06llu",
                static_cast<unsigned long long>(next_bundle_++));
  b.bundle_id = id;
  b.site_id = site_id;
  b.members = std::move(members);
  const BoundingRequest box = bin.bounding();
  b.request_cores = box.cores;
  b.request_minutes = box.minutes;
  b.submitted_at = now;
  b.last_event_at = now;
  return b;
}

std::vector<Bundle> SiteRegistry::flush_due_sites(Minute now,
                                                  const BundlePolicy& policy,
                                                  const RectLookup& lookup) {
  std::vector<Bundle> out;
  for (auto& [id, s] : sites_) {
    if (!s.active) continue;
    if (now - s.last_attempt_at < policy.flush_interval_minutes) continue;
    if (auto b = try_form_bundle(id, lookup, policy, /*force=*/true, now)) {
      out.push_back(std::move(*b));
    }
  }
  return out;
}

void SiteRegistry::enqueue_back(const std::string& site_id,
                                const std::string& job_id) {
  mutable_site(site_id).queue.push_back(job_id);
}

void SiteRegistry::enqueue_front(const std::string& site_id,
                                 const std::vector<std::string>& job_ids) {
  auto& q = mutable_site(site_id).queue;
  q.insert(q.begin(), job_ids.begin(), job_ids.end());
}

bool SiteRegistry::remove_from_queue(const std::string& site_id,
                                     const std::string& job_id) {
  auto& q = mutable_site(site_id).queue;
  auto it = std::find(q.begin(), q.end(), job_id);
  if (it == q.end()) return false;
  q.erase(it);
  return true;
}

std::vector<std::string> SiteRegistry::drain_queue(const std::string& site_id) {
  auto& q = mutable_site(site_id).queue;
  std::vector<std::string> out(q.begin(), q.end());
  q.clear();
  return out;
}

void SiteRegistry::set_active(const std::string& site_id, bool active) {
  mutable_site(site_id).active = active;
}

}  // namespace kimdispatch
