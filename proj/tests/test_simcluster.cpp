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


#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "kimdispatch/simcluster.hpp"

using namespace kimdispatch;
using namespace kimdispatch::sim;
namespace fs = std::filesystem;

namespace {

ExecutionSite site(std::string id, int cores, int minutes) {
  ExecutionSite s;
  s.site_id = std::move(id);
  s.cores_per_node = cores;
  s.max_walltime_minutes = minutes;
  return s;
}

Bundle five_job_bundle() {
  Bundle b;
  b.bundle_id = "B1";
  b.site_id = "S";
  b.members = {{"A", {0, 0, {3, 40}}},
               {"B", {3, 0, {3, 30}}},
               {"C", {0, 40, {6, 30}}},
               {"D", {0, 70, {2, 20}}},
               {"E", {2, 70, {3, 25}}}};
  b.request_cores = 6;
  b.request_minutes = 95;
  return b;
}

const PlannedStep& step(const std::vector<PlannedStep>& plan,
                        const std::string& id) {
  for (const auto& p : plan) {
    if (p.job_id == id) return p;
  }
  throw std::out_of_range(id);
}

// True runtimes equal to the unbuffered requests of the five-job bundle.
Workload five_job_workload() {
  Workload w;
  const std::vector<std::pair<std::string, int>> jobs = {
      {"A", 35}, {"B", 25}, {"C", 25}, {"D", 15}, {"E", 20}};
  for (const auto& [id, minutes] : jobs) {
    const int cores = id == "C" ? 6 : id == "D" ? 2 : 3;
    w.jobs.push_back({id, "T", "M", cores, minutes, minutes - 5, 0});
  }
  return w;
}

SimConfig five_job_config() {
  SimConfig c;
  c.sites = {site("S", 6, 100)};
  c.policy.min_jobs = 5;
  c.policy.timeout_buffer_minutes = 5;
  c.queue_wait["S"] = QueueWait::fixed(10);
  c.audit_each_event = true;
  return c;
}

}  // namespace

TEST_CASE("planned steps follow the step graph") {
  const Bundle b = five_job_bundle();
  const StepGraph g = build_step_graph(
      std::vector<PlacedJob>{{"A", b.members[0].placement},
                             {"B", b.members[1].placement},
                             {"C", b.members[2].placement},
                             {"D", b.members[3].placement},
                             {"E", b.members[4].placement}});
  const std::map<std::string, int> rt = {
      {"A", 30}, {"B", 20}, {"C", 20}, {"D", 10}, {"E", 15}};
  const auto plan = plan_bundle_execution(b, g, rt, 100, 5);
  CHECK(step(plan, "A").start == 100);
  CHECK(step(plan, "A").end == 130);
  CHECK(step(plan, "B").end == 120);
  CHECK(step(plan, "C").start == 130);
  CHECK(step(plan, "D").start == 150);
  CHECK(step(plan, "E").end == 165);
  for (const auto& p : plan) {
    CHECK(p.starts);
    CHECK(p.state == AccountingState::Completed);
  }
}

TEST_CASE("overrunning steps are killed at allotment plus grace") {
  const Bundle b = five_job_bundle();
  std::vector<PlacedJob> placed;
  for (const auto& m : b.members) placed.push_back({m.job_id, m.placement});
  const StepGraph g = build_step_graph(placed);
  // A overruns; C is pushed late enough that E hits the bundle deadline.
  const std::map<std::string, int> rt = {
      {"A", 500}, {"B", 20}, {"C", 20}, {"D", 10}, {"E", 200}};
  const auto plan = plan_bundle_execution(b, g, rt, 0, 5);
  CHECK(step(plan, "A").end == 45);
  CHECK(step(plan, "A").state == AccountingState::Timeout);
  CHECK(step(plan, "C").start == 45);
  CHECK(step(plan, "C").end == 65);
  // E: allotment 25, started at 65, bundle deadline 95 + 5 = 100.
  CHECK(step(plan, "E").end == 95);
  CHECK(step(plan, "E").state == AccountingState::Timeout);

  const std::map<std::string, int> slow_c = {
      {"A", 30}, {"B", 20}, {"C", 500}, {"D", 10}, {"E", 25}};
  const auto late = plan_bundle_execution(b, g, slow_c, 0, 5);
  CHECK(step(late, "C").end == 65);  // 30 + 30 + 5
  CHECK(step(late, "E").start == 65);
  CHECK(step(late, "E").end == 90);
  const std::map<std::string, int> slower_c = {
      {"A", 40}, {"B", 20}, {"C", 500}, {"D", 10}, {"E", 25}};
  // E ends exactly at the deadline, which still counts as completion.
  const auto cut = plan_bundle_execution(b, g, slower_c, 0, 5);
  CHECK(step(cut, "C").end == 75);
  CHECK(step(cut, "E").end == 100);
  CHECK(step(cut, "E").elapsed() == 25);
  CHECK(step(cut, "E").state == AccountingState::Completed);
}

TEST_CASE("a step cut short by the bundle deadline before its allotment is cancelled") {
  // Three stacked 1x10 steps; each overrun eats its grace, so the third
  // step inherits the lateness of both predecessors.
  Bundle b;
  b.bundle_id = "B2";
  b.members = {{"x", {0, 0, {1, 10}}},
               {"y", {0, 10, {1, 10}}},
               {"z", {0, 20, {1, 10}}}};
  b.request_cores = 1;
  b.request_minutes = 30;
  std::vector<PlacedJob> placed;
  for (const auto& m : b.members) placed.push_back({m.job_id, m.placement});
  const StepGraph g = build_step_graph(placed);
  const std::map<std::string, int> overrun = {{"x", 50}, {"y", 50}, {"z", 50}};

  // Grace 3: x 0-13, y 13-26, z 26 until the deadline at 33.
  auto plan = plan_bundle_execution(b, g, overrun, 0, 3);
  CHECK(step(plan, "x").end == 13);
  CHECK(step(plan, "y").end == 26);
  CHECK(step(plan, "z").end == 33);
  CHECK(step(plan, "z").elapsed() == 7);
  CHECK(step(plan, "z").state == AccountingState::Cancelled);

  // Grace 10: y is killed exactly at the deadline and z never starts.
  plan = plan_bundle_execution(b, g, overrun, 0, 10);
  CHECK(step(plan, "y").end == 40);
  CHECK(step(plan, "y").state == AccountingState::Timeout);
  CHECK_FALSE(step(plan, "z").starts);
  CHECK(step(plan, "z").state == AccountingState::Cancelled);

  // A step that runs its whole allotment before the deadline is a timeout.
  plan = plan_bundle_execution(b, g, {{"x", 12}, {"y", 10}, {"z", 50}}, 0, 3);
  CHECK(step(plan, "z").start == 22);
  CHECK(step(plan, "z").end == 33);
  CHECK(step(plan, "z").state == AccountingState::Timeout);
}

TEST_CASE("five-job scenario runs to completion in one bundle") {
  const SimResult r = run(five_job_config(), five_job_workload());
  CHECK(r.all_terminal);
  CHECK(r.audit_violations.empty());
  REQUIRE(r.bundles.size() == 1);
  const BundleTrace& b = r.bundles[0];
  CHECK(b.request_cores == 6);
  CHECK(b.request_minutes == 95);
  CHECK(b.submitted_at == 0);
  CHECK(b.started_at == 10);
  CHECK(b.ended_at == 75);
  for (const auto& j : r.jobs) {
    CHECK(j.state() == JobState::Completed);
    CHECK(j.attempts() == 1);
  }
  CHECK(r.results.size() == 5);
  const Metrics m = compute_metrics(r);
  CHECK(m.completed == 5);
  CHECK(m.core_minutes_requested == 570);
  CHECK(m.core_minutes_consumed == 3 * 30 + 3 * 20 + 6 * 20 + 2 * 10 + 3 * 15);
  CHECK(m.mean_turnaround == doctest::Approx(75.0));
  REQUIRE(m.bundles.size() == 1);
  CHECK(m.bundles[0].waste_fraction == doctest::Approx(65.0 / 570.0));
}

TEST_CASE("same inputs give the same event log, other seeds need not") {
  SimConfig c = five_job_config();
  c.queue_wait["S"] = QueueWait::uniform(0, 500);
  c.policy.min_jobs = 1;
  const SimResult a = run(c, five_job_workload());
  const SimResult b = run(c, five_job_workload());
  CHECK(a.event_log == b.event_log);
  bool differs = false;
  for (std::uint64_t seed = 2; seed < 6 && !differs; ++seed) {
    c.seed = seed;
    differs = run(c, five_job_workload()).event_log != a.event_log;
  }
  CHECK(differs);
}

TEST_CASE("overrun fault leads to a timeout and a doubled request") {
  SimConfig c = five_job_config();
  FaultSpec f;
  f.kind = FaultKind::StepOverrun;
  f.target = "D";
  f.factor = 3.0;
  c.faults.push_back(f);
  const SimResult r = run(c, five_job_workload());
  CHECK(r.all_terminal);
  CHECK(r.audit_violations.empty());
  const JobRecord& d = r.jobs[3];
  REQUIRE(d.job_id() == "D");
  CHECK(d.state() == JobState::Completed);
  CHECK(d.timeouts() == 1);
  CHECK(d.requested_minutes() == 30);
  CHECK(r.counters.timeouts == 1);
}

TEST_CASE("lost sentinel is retried once with the same request") {
  SimConfig c = five_job_config();
  FaultSpec f;
  f.kind = FaultKind::NodeFault;
  f.target = "B";
  f.attempts = 1;
  c.faults.push_back(f);
  const SimResult r = run(c, five_job_workload());
  CHECK(r.all_terminal);
  const JobRecord& b = r.jobs[1];
  CHECK(b.state() == JobState::Completed);
  CHECK(b.attempts() == 2);
  CHECK(b.doublings() == 0);
  CHECK(r.counters.node_faults == 1);
}

TEST_CASE("materialized bundle directories hold the make file and accounting") {
  SimConfig c = five_job_config();
  const fs::path dir = fs::temp_directory_path() / "kimdispatch_sim_test";
  fs::remove_all(dir);
  c.materialize_dir = dir;
  const SimResult r = run(c, five_job_workload());
  CHECK(r.all_terminal);
  CHECK(fs::exists(dir / "B000001" / "Makefile"));
  CHECK(fs::exists(dir / "B000001" / "accounting.txt"));
  CHECK(fs::exists(dir / "B000001" / "C" / "kim-done"));
  fs::remove_all(dir);
}

TEST_CASE("horizon stops a run early with a diagnostic") {
  SimConfig c = five_job_config();
  c.horizon_minutes = 20;
  const SimResult r = run(c, five_job_workload());
  CHECK_FALSE(r.all_terminal);
  CHECK_FALSE(r.diagnostics.empty());
  CHECK(compute_metrics(r).live == 5);
}

TEST_CASE("invalid configurations are rejected") {
  Workload w = five_job_workload();
  SimConfig c = five_job_config();
  c.queue_wait["nowhere"] = QueueWait::fixed(1);
  CHECK_THROWS_AS(run(c, w), std::invalid_argument);
  c = five_job_config();
  c.faults.push_back({FaultKind::NodeFault, "ghost", 1.0, 1, 0, 0});
  CHECK_THROWS_AS(run(c, w), std::invalid_argument);
  c = five_job_config();
  c.faults.push_back({FaultKind::GlobalStall, "S", 1.0, 1, 10, 10});
  CHECK_THROWS_AS(run(c, w), std::invalid_argument);
  c = five_job_config();
  c.toggles.push_back({5, "ghost", false});
  CHECK_THROWS_AS(run(c, w), std::invalid_argument);
  c = five_job_config();
  w.jobs.push_back(w.jobs.front());
  CHECK_THROWS_AS(run(c, w), std::invalid_argument);
}

TEST_CASE("nearest-rank percentile") {
  CHECK(percentile({}, 0.95) == 0.0);
  CHECK(percentile({5}, 0.95) == 5.0);
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(21 - i);
  CHECK(percentile(v, 0.95) == 19.0);
  CHECK(percentile(v, 0.5) == 10.0);
  CHECK(percentile(v, 1.0) == 20.0);
  CHECK(percentile(v, 0.0) == 1.0);
}

TEST_CASE("stalled bundle is cancelled once and its unfinished steps rerun") {
  SimConfig c = five_job_config();
  FaultSpec f;
  f.kind = FaultKind::GlobalStall;
  f.target = "S";
  f.from = 45;  // A and B are done, C is running
  f.to = 150;
  c.faults.push_back(f);
  const SimResult r = run(c, five_job_workload());
  CHECK(r.all_terminal);
  CHECK(r.audit_violations.empty());
  CHECK(r.counters.cancellations == 1);
  REQUIRE(r.bundles.size() >= 2);
  CHECK(r.bundles[0].hung);
  CHECK(r.bundles[0].cancelled);
  // Last notice at the RUNNING event (10); 2 x 95 later plus one tick.
  bool saw_cancel = false;
  for (const auto& line : r.event_log) {
    if (line.find("DISPATCH CANCEL ") != std::string::npos) {
      CHECK(line.rfind("t=201 ", 0) == 0);
      saw_cancel = true;
    }
  }
  CHECK(saw_cancel);
  for (const auto& j : r.jobs) {
    CHECK(j.state() == JobState::Completed);
    const bool finished_first = j.job_id() == "A" || j.job_id() == "B";
    CHECK(j.attempts() == (finished_first ? 1 : 2));
  }
}

TEST_CASE("deactivating a site moves queued work elsewhere") {
  SimConfig c = five_job_config();
  c.sites.push_back(site("T", 6, 100));
  c.policy.min_jobs = 10;
  c.policy.min_fill = 1.0;
  c.policy.flush_interval_minutes = 100;
  c.toggles.push_back({50, "S", false});
  const SimResult r = run(c, five_job_workload());
  CHECK(r.all_terminal);
  CHECK(r.audit_violations.empty());
  for (const auto& b : r.bundles) CHECK(b.site_id == "T");
  for (const auto& j : r.jobs) CHECK(j.state() == JobState::Completed);
}
