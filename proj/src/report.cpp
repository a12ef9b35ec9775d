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

#include "kimdispatch/report.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "kimdispatch/simcluster.hpp"

namespace kimdispatch {

RunSummary summarize(const std::string& label,
                     const std::vector<io::JobRow>& rows) {
  RunSummary s;
  s.label = label;
  std::vector<double> turnaround;
  long long attempts = 0;
  for (const auto& r : rows) {
    ++s.jobs;
    if (r.state == "Completed") {
      ++s.completed;
    } else if (r.state == "Errored") {
      ++s.errored;
    } else {
      ++s.live;
    }
    attempts += r.attempts;
    s.doublings += r.doublings;
    s.rebinds += r.rebinds;
    if (auto t = r.turnaround()) turnaround.push_back(static_cast<double>(*t));
  }
  if (!turnaround.empty()) {
    s.mean_turnaround =
        std::accumulate(turnaround.begin(), turnaround.end(), 0.0) /
        static_cast<double>(turnaround.size());
    s.p95_turnaround = sim::percentile(turnaround, 0.95);
    s.max_turnaround = *std::max_element(turnaround.begin(), turnaround.end());
  }
  if (s.jobs > 0) {
    s.mean_attempts =
        static_cast<double>(attempts) / static_cast<double>(s.jobs);
  }
  return s;
}

RunSummary aggregate(const std::vector<std::vector<io::JobRow>>& runs) {
  std::vector<io::JobRow> pooled;
  for (const auto& r : runs) pooled.insert(pooled.end(), r.begin(), r.end());
  return summarize("aggregate", pooled);
}

std::string format_summary_row(const RunSummary& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%.3f,%.3f,%.3f,%.4f,%lld,%lld",
                s.label.c_str(), s.jobs, s.completed, s.errored, s.live,
                s.mean_turnaround, s.p95_turnaround, s.max_turnaround,
                s.mean_attempts, s.doublings, s.rebinds);
  return buf;
}

std::string format_summary_table(const std::vector<RunSummary>& rows) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.label.size());
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%-*s %7s %9s %7s %5s %10s %10s %9s %9s %8s\n",
                static_cast<int>(width), "run", "jobs", "completed", "errored",
                "live", "mean_turn", "p95_turn", "attempts", "doublings",
                "rebinds");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%-*s %7zu %9zu %7zu %5zu %10.1f %10.1f %9.3f %9lld %8lld\n",
                  static_cast<int>(width), r.label.c_str(), r.jobs,
                  r.completed, r.errored, r.live, r.mean_turnaround,
                  r.p95_turnaround, r.mean_attempts, r.doublings, r.rebinds);
    out += buf;
  }
  return out;
}

}  // namespace kimdispatch
