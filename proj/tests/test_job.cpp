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


#include <stdexcept>

#include "doctest.h"
#include "kimdispatch/job.hpp"

using namespace kimdispatch;

namespace {

JobSpec spec(std::string id = "j1", int minutes = 30) {
  JobSpec s;
  s.job_id = std::move(id);
  s.test_id = "T";
  s.model_id = "M";
  s.cores = 2;
  s.requested_minutes = minutes;
  s.true_runtime_minutes = minutes;
  return s;
}

}  // namespace

TEST_CASE("identifiers double as make targets and directory names") {
  CHECK(valid_identifier("TE_123.v1-x"));
  CHECK_FALSE(valid_identifier(""));
  CHECK_FALSE(valid_identifier("a b"));
  CHECK_FALSE(valid_identifier("a/b"));
  CHECK_FALSE(valid_identifier("a:b"));
  CHECK_FALSE(valid_identifier("all"));
  CHECK_FALSE(valid_identifier(".."));
}

TEST_CASE("lifecycle edges") {
  using S = JobState;
  CHECK(transition_allowed(S::Pending, S::Bound));
  CHECK(transition_allowed(S::Bound, S::Bundled));
  CHECK(transition_allowed(S::Bundled, S::Running));
  CHECK(transition_allowed(S::Running, S::Completed));
  CHECK(transition_allowed(S::Running, S::Bound));
  CHECK(transition_allowed(S::Bundled, S::Bound));
  CHECK_FALSE(transition_allowed(S::Pending, S::Running));
  CHECK_FALSE(transition_allowed(S::Bound, S::Completed));
  CHECK_FALSE(transition_allowed(S::Completed, S::Bound));
  CHECK_FALSE(transition_allowed(S::Errored, S::Bound));
  for (S from : {S::Pending, S::Bound, S::Bundled, S::Running}) {
    CHECK(transition_allowed(from, S::Errored));
  }
}

TEST_CASE("record walks a full lifecycle with history") {
  JobRecord j(spec(), 5);
  CHECK(j.state() == JobState::Pending);
  CHECK(j.ingested_at() == 5);
  j.bind_to("S1", 5, "intake");
  CHECK(j.rebinds() == 0);
  j.mark_bundled("B1", 6);
  CHECK(j.bundle_id() == "B1");
  j.transition(JobState::Running, 7, "");
  CHECK(j.bundle_id() == "B1");
  j.transition(JobState::Completed, 40, "done");
  CHECK(j.terminal());
  CHECK(j.finished_at() == 40);
  CHECK_FALSE(j.bundle_id());
  REQUIRE(j.history().size() == 4);
  CHECK(j.history()[3].from == JobState::Running);
  CHECK(j.history()[3].time == 40);
  CHECK_THROWS_AS(j.transition(JobState::Bound, 41, ""), std::logic_error);
}

TEST_CASE("doubling and rebinding counters") {
  JobRecord j(spec("j", 30), 0);
  j.bind_to("S1", 0, "");
  j.double_request();
  j.double_request();
  CHECK(j.requested_minutes() == 120);
  CHECK(j.original_minutes() == 30);
  CHECK(j.doublings() == 2);
  CHECK(j.requested_rect() == ResourceRect{2, 120});
  j.bind_to("S1", 1, "same site");
  CHECK(j.rebinds() == 0);
  j.bind_to("S2", 2, "moved");
  CHECK(j.rebinds() == 1);
  CHECK(j.bound_site() == "S2");
}

TEST_CASE("errored jobs carry a kind") {
  JobRecord j(spec(), 0);
  j.mark_errored(ErrorKind::Resource, 3, "no site");
  CHECK(j.state() == JobState::Errored);
  CHECK(j.error() == ErrorKind::Resource);
  CHECK(j.finished_at() == 3);
  CHECK(to_string(j.error()) == "resource");
  CHECK(to_string(ErrorKind::Flaky) == "flaky");
}

TEST_CASE("invalid specs are refused") {
  CHECK_THROWS_AS(JobRecord(spec("bad id"), 0), std::invalid_argument);
  auto s = spec();
  s.cores = 0;
  CHECK_THROWS_AS(JobRecord(s, 0), std::invalid_argument);
  s = spec();
  s.requested_minutes = 0;
  CHECK_THROWS_AS(JobRecord(s, 0), std::invalid_argument);
}
