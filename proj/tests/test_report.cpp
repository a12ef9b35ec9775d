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


#include <algorithm>

#include "doctest.h"
#include "kimdispatch/report.hpp"

using namespace kimdispatch;

namespace {

io::JobRow row(std::string id, std::string state, int attempts,
               std::optional<Minute> finished, int doublings = 0) {
  io::JobRow r;
  r.job_id = std::move(id);
  r.state = std::move(state);
  r.error = "none";
  r.attempts = attempts;
  r.doublings = doublings;
  r.ingested_at = 10;
  r.finished_at = finished;
  return r;
}

}  // namespace

TEST_CASE("summary counts states and turnaround over finished jobs") {
  const std::vector<io::JobRow> rows = {
      row("a", "Completed", 1, 20),  // 10
      row("b", "Completed", 3, 50, 2),  // 40
      row("c", "Errored", 2, 110),  // 100
      row("d", "Bound", 1, std::nullopt)};
  const RunSummary s = summarize("r1", rows);
  CHECK(s.jobs == 4);
  CHECK(s.completed == 2);
  CHECK(s.errored == 1);
  CHECK(s.live == 1);
  CHECK(s.mean_turnaround == doctest::Approx(50.0));
  CHECK(s.p95_turnaround == 100.0);
  CHECK(s.max_turnaround == 100.0);
  CHECK(s.mean_attempts == doctest::Approx(7.0 / 4.0));
  CHECK(s.doublings == 2);
}

TEST_CASE("aggregate pools every run") {
  const std::vector<std::vector<io::JobRow>> runs = {
      {row("a", "Completed", 1, 20)},
      {row("a", "Completed", 1, 40), row("b", "Errored", 1, 70)}};
  const RunSummary s = aggregate(runs);
  CHECK(s.label == "aggregate");
  CHECK(s.jobs == 3);
  CHECK(s.mean_turnaround == doctest::Approx((10.0 + 30.0 + 60.0) / 3.0));
}

TEST_CASE("empty run summarizes to zeros") {
  const RunSummary s = summarize("empty", {});
  CHECK(s.jobs == 0);
  CHECK(s.mean_turnaround == 0.0);
  CHECK(s.mean_attempts == 0.0);
}

TEST_CASE("summary row and table formatting") {
  RunSummary s;
  s.label = "x";
  s.jobs = 2;
  s.completed = 2;
  s.mean_turnaround = 12.5;
  s.p95_turnaround = 20;
  s.max_turnaround = 20;
  s.mean_attempts = 1;
  CHECK(format_summary_row(s) ==
        "x,2,2,0,0,12.500,20.000,20.000,1.0000,0,0");
  const std::string table = format_summary_table({s});
  CHECK(table.find("run") == 0);
  CHECK(table.find("\nx ") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 2);
}
