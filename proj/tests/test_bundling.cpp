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


#include <map>
#include <stdexcept>

#include "doctest.h"
#include "kimdispatch/bundling.hpp"
#include "kimdispatch/random.hpp"

using namespace kimdispatch;

namespace {

ExecutionSite make_site(std::string id, int cores, int minutes,
                        bool active = true) {
  ExecutionSite s;
  s.site_id = std::move(id);
  s.cores_per_node = cores;
  s.max_walltime_minutes = minutes;
  s.active = active;
  return s;
}

struct Rects {
  std::map<std::string, ResourceRect> by_id;
  RectLookup lookup() const {
    return [this](const std::string& id) { return by_id.at(id); };
  }
};

}  // namespace

TEST_CASE("policy text round-trips and keeps unspecified keys") {
  const BundlePolicy p = BundlePolicy::parse(
      "min_jobs=3, min_fill=0.25,flush=15,buffer=0,heartbeat=3.5");
  CHECK(p.min_jobs == 3);
  CHECK(p.min_fill == 0.25);
  CHECK(p.flush_interval_minutes == 15);
  CHECK(p.timeout_buffer_minutes == 0);
  CHECK(p.heartbeat_factor == 3.5);
  const BundlePolicy q = BundlePolicy::parse(p.to_string());
  CHECK(q.to_string() == p.to_string());

  const BundlePolicy partial = BundlePolicy::parse("buffer=9", p);
  CHECK(partial.timeout_buffer_minutes == 9);
  CHECK(partial.min_jobs == 3);
  CHECK(BundlePolicy::parse("").to_string() == BundlePolicy{}.to_string());
}

TEST_CASE("policy rejects unknown keys and out-of-range values") {
  CHECK_THROWS_AS(BundlePolicy::parse("jobs=3"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("min_jobs"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("min_jobs=0"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("min_fill=1.5"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("buffer=-1"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("heartbeat=1"), std::invalid_argument);
  CHECK_THROWS_AS(BundlePolicy::parse("flush=0"), std::invalid_argument);
}

TEST_CASE("sufficiency is either enough jobs or enough fill") {
  BundlePolicy p;
  p.min_jobs = 3;
  p.min_fill = 0.5;
  CHECK_FALSE(p.sufficient(2, 0.49));
  CHECK(p.sufficient(3, 0.0));
  CHECK(p.sufficient(1, 0.5));
}

TEST_CASE("accommodation counts the buffer and requires an active site") {
  const auto s = make_site("S", 6, 100);
  CHECK(accommodates(s, {6, 95}, 5));
  CHECK_FALSE(accommodates(s, {6, 96}, 5));
  CHECK_FALSE(accommodates(s, {7, 10}, 0));
  CHECK_FALSE(accommodates(make_site("T", 6, 100, false), {1, 1}, 0));
}

TEST_CASE("registry rejects duplicate and degenerate sites") {
  CHECK_THROWS_AS(SiteRegistry({make_site("S", 1, 1), make_site("S", 2, 2)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SiteRegistry({make_site("S", 0, 1)}), std::invalid_argument);
  SiteRegistry r({make_site("b", 1, 1), make_site("a", 1, 1)});
  const auto sites = r.sites();
  REQUIRE(sites.size() == 2);
  CHECK(sites[0]->site_id == "a");
  CHECK_THROWS_AS(r.site("zz"), std::out_of_range);
}

TEST_CASE("binding only considers compatible active sites") {
  SiteRegistry r({make_site("small", 4, 100), make_site("big", 8, 300),
                  make_site("off", 8, 300, false)});
  Rng rng(1);
  CHECK(r.compatible_sites({6, 100}, 5) == std::vector<std::string>{"big"});
  for (int i = 0; i < 20; ++i) {
    CHECK(r.bind("j" + std::to_string(i), {6, 100}, 5, rng) == "big");
  }
  CHECK_FALSE(r.bind("huge", {9, 10}, 5, rng));
  CHECK(r.site("big").queue.size() == 20);
  CHECK(r.site("off").queue.empty());
}

TEST_CASE("binding splits evenly over equally compatible sites") {
  SiteRegistry r({make_site("a", 8, 300), make_site("b", 8, 300)});
  Rng rng(42);
  for (int i = 0; i < 4000; ++i) {
    r.bind("j" + std::to_string(i), {1, 10}, 5, rng);
  }
  const double share = r.site("a").queue.size() / 4000.0;
  CHECK(share > 0.46);
  CHECK(share < 0.54);
}

TEST_CASE("bundle forms once enough jobs are packed") {
  BundlePolicy p;
  p.min_jobs = 3;
  p.min_fill = 1.0;
  p.timeout_buffer_minutes = 5;
  SiteRegistry r({make_site("S", 6, 100)});
  Rects rects;
  for (const char* id : {"a", "b", "c", "d"}) {
    rects.by_id[id] = {2, 20};
  }
  r.enqueue_back("S", "a");
  r.enqueue_back("S", "b");
  CHECK_FALSE(r.try_form_bundle("S", rects.lookup(), p, false, 0));
  CHECK(r.site("S").queue.size() == 2);
  r.enqueue_back("S", "c");
  r.enqueue_back("S", "d");
  auto b = r.try_form_bundle("S", rects.lookup(), p, false, 7);
  REQUIRE(b);
  CHECK(b->bundle_id == "B000001");
  CHECK(b->site_id == "S");
  REQUIRE(b->members.size() == 3);
  CHECK(b->members[0].job_id == "a");
  CHECK(b->members[0].placement.rect == ResourceRect{2, 25});
  CHECK(b->request_cores == 6);
  CHECK(b->request_minutes == 25);
  CHECK(b->submitted_at == 7);
  CHECK(r.site("S").queue == std::deque<std::string>{"d"});
  auto forced = r.try_form_bundle("S", rects.lookup(), p, true, 8);
  REQUIRE(forced);
  CHECK(forced->bundle_id == "B000002");
  CHECK(r.site("S").queue.empty());
}

TEST_CASE("a job that does not fit keeps its queue position") {
  BundlePolicy p;
  p.min_jobs = 2;
  p.min_fill = 1.0;
  p.timeout_buffer_minutes = 0;
  SiteRegistry r({make_site("S", 4, 100)});
  Rects rects;
  rects.by_id = {{"wide", {4, 90}}, {"tall", {4, 20}}, {"small", {4, 10}}};
  for (const char* id : {"wide", "tall", "small"}) r.enqueue_back("S", id);
  auto b = r.try_form_bundle("S", rects.lookup(), p, false, 0);
  REQUIRE(b);
  REQUIRE(b->members.size() == 2);
  CHECK(b->members[0].job_id == "wide");
  CHECK(b->members[1].job_id == "small");
  CHECK(b->members[1].placement.y == 90);
  CHECK(r.site("S").queue == std::deque<std::string>{"tall"});
}

TEST_CASE("inactive site never forms bundles") {
  BundlePolicy p;
  p.min_jobs = 1;
  SiteRegistry r({make_site("S", 4, 100)});
  Rects rects;
  rects.by_id["x"] = {1, 1};
  r.enqueue_back("S", "x");
  r.set_active("S", false);
  CHECK_FALSE(r.try_form_bundle("S", rects.lookup(), p, true, 0));
  CHECK(r.flush_due_sites(1000, p, rects.lookup()).empty());
  CHECK(r.drain_queue("S") == std::vector<std::string>{"x"});
  CHECK(r.site("S").queue.empty());
}

TEST_CASE("flush forces a bundle once the interval has elapsed") {
  BundlePolicy p;
  p.min_jobs = 10;
  p.min_fill = 1.0;
  p.flush_interval_minutes = 60;
  SiteRegistry r({make_site("S", 4, 100)}, 0);
  Rects rects;
  rects.by_id["x"] = {1, 10};
  r.enqueue_back("S", "x");
  CHECK_FALSE(r.try_form_bundle("S", rects.lookup(), p, false, 10));
  CHECK(r.flush_due_sites(69, p, rects.lookup()).empty());
  const auto due = r.flush_due_sites(70, p, rects.lookup());
  REQUIRE(due.size() == 1);
  CHECK(due[0].members.size() == 1);
  CHECK(due[0].waste_fraction() == doctest::Approx(0.0));
}

TEST_CASE("queue edits keep order") {
  SiteRegistry r({make_site("S", 4, 100)});
  r.enqueue_back("S", "c");
  r.enqueue_front("S", {"a", "b"});
  CHECK(r.site("S").queue == std::deque<std::string>{"a", "b", "c"});
  CHECK(r.remove_from_queue("S", "b"));
  CHECK_FALSE(r.remove_from_queue("S", "b"));
  CHECK(r.site("S").queue == std::deque<std::string>{"a", "c"});
}
