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


#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "doctest.h"
#include "kimdispatch/packing.hpp"
#include "kimdispatch/stepgraph.hpp"
#include "oracles.hpp"

using namespace kimdispatch;

namespace {

std::vector<PlacedJob> five_job_members() {
  return {{"A", {0, 0, {3, 40}}},
          {"B", {3, 0, {3, 30}}},
          {"C", {0, 40, {6, 30}}},
          {"D", {0, 70, {2, 20}}},
          {"E", {2, 70, {3, 25}}}};
}

std::map<std::string, std::string> echo_commands(const StepGraph& g) {
  std::map<std::string, std::string> out;
  for (const auto& n : g.nodes()) out[n] = "@echo run-" + n;
  return out;
}

}  // namespace

TEST_CASE("beneath relation of the five-job bundle") {
  const auto members = five_job_members();
  const Precedence raw = beneath_relation(members);
  const Precedence expected = {{"A", "C"}, {"A", "D"}, {"A", "E"}, {"B", "C"},
                               {"B", "E"}, {"C", "D"}, {"C", "E"}};
  CHECK(raw == expected);
}

TEST_CASE("reduced step graph of the five-job bundle") {
  const StepGraph g = build_step_graph(five_job_members());
  const Precedence expected = {{"A", "C"}, {"B", "C"}, {"C", "D"}, {"C", "E"}};
  CHECK(g.edges() == expected);
  CHECK(g.nodes() == std::vector<std::string>{"A", "B", "C", "D", "E"});
  CHECK(g.prerequisites("C") == std::vector<std::string>{"A", "B"});
  CHECK(g.prerequisites("A").empty());
  CHECK(g.topological_order() ==
        std::vector<std::string>{"A", "B", "C", "D", "E"});
}

TEST_CASE("side-by-side steps touching at a core boundary are independent") {
  const std::vector<PlacedJob> m = {{"low", {0, 0, {3, 10}}},
                                    {"high", {3, 10, {3, 10}}}};
  CHECK(beneath_relation(m).empty());
  CHECK(beneath_relation(m, BeneathRule::VerticalOnly) ==
        Precedence{{"low", "high"}});
}

TEST_CASE("steps overlapping in time are never ordered") {
  const std::vector<PlacedJob> m = {{"a", {0, 0, {2, 10}}},
                                    {"b", {0, 10, {2, 5}}},
                                    {"c", {2, 5, {2, 10}}}};
  const Precedence r = beneath_relation(m);
  CHECK(r == Precedence{{"a", "b"}});
}

TEST_CASE("reduce rejects cycles and unknown nodes") {
  CHECK_THROWS_AS(reduce({"a", "b"}, {{"a", "b"}, {"b", "a"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(reduce({"a"}, {{"a", "z"}}), std::invalid_argument);
  CHECK_THROWS_AS(reduce({"a"}, {{"a", "a"}}), std::invalid_argument);
}

TEST_CASE("reduce drops edges implied by longer paths") {
  const StepGraph g =
      reduce({"d", "c", "b", "a"}, {{"a", "b"}, {"b", "c"}, {"a", "c"},
                                    {"c", "d"}, {"a", "d"}});
  CHECK(g.edges() == Precedence{{"a", "b"}, {"b", "c"}, {"c", "d"}});
  CHECK(g.nodes() == std::vector<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("make text lists every step with its prerequisites") {
  const StepGraph g = build_step_graph(five_job_members());
  const std::string mk = emit_make(g, echo_commands(g));
  CHECK(mk.find(".PHONY: all A B C D E\n") != std::string::npos);
  CHECK(mk.find("all: A B C D E\n") != std::string::npos);
  CHECK(mk.find("\nC: A B\n\t@echo run-C\n") != std::string::npos);
  CHECK(mk.find("\nA:\n\t@echo run-A\n") != std::string::npos);
  CHECK(mk.find("\nE: C\n") != std::string::npos);
  auto missing = echo_commands(g);
  missing.erase("D");
  CHECK_THROWS_AS(emit_make(g, missing), std::invalid_argument);
}

TEST_CASE("make runs the emitted steps in dependency order") {
  if (std::system("command -v make > /dev/null 2>&1") != 0) return;
  const StepGraph g = build_step_graph(five_job_members());
  const auto dir =
      std::filesystem::temp_directory_path() / "kimdispatch_make_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "Makefile") << emit_make(g, echo_commands(g));
  }
  const std::string cmd = "make -s -j1 -C " + dir.string() + " all";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe);
  std::string out;
  char buf[256];
  while (fgets(buf, sizeof buf, pipe)) out += buf;
  CHECK(pclose(pipe) == 0);
  std::filesystem::remove_all(dir);
  std::vector<std::string> order;
  std::size_t pos = 0;
  while ((pos = out.find("run-", pos)) != std::string::npos) {
    order.push_back(out.substr(pos + 4, 1));
    pos += 5;
  }
  REQUIRE(order.size() == 5);
  const auto at = [&](const std::string& n) {
    return std::find(order.begin(), order.end(), n) - order.begin();
  };
  for (const auto& [from, to] : g.edges()) CHECK(at(from) < at(to));
}

TEST_CASE("property: reduced graph equals the oracle reduction of packings") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 8);
    const int h = 5 + static_cast<int>(rng() % 120);
    PackingBin bin(w, h);
    std::vector<PlacedJob> members;
    for (int i = 0; i < 10; ++i) {
      auto p = bin.insert({1 + static_cast<int>(rng() % w),
                           1 + static_cast<int>(rng() % (h / 2 + 1))});
      if (p) members.push_back({"j" + std::to_string(i), *p});
    }
    for (auto rule : {BeneathRule::CoreOverlap, BeneathRule::VerticalOnly}) {
      const Precedence raw = beneath_relation(members, rule);
      std::vector<std::string> nodes;
      for (const auto& m : members) nodes.push_back(m.job_id);
      for (const auto& [a, b] : raw) {
        const auto& pa = std::find_if(members.begin(), members.end(),
                                      [&](auto& m) { return m.job_id == a; })
                             ->placement;
        const auto& pb = std::find_if(members.begin(), members.end(),
                                      [&](auto& m) { return m.job_id == b; })
                             ->placement;
        CHECK(pa.top() <= pb.bottom());
      }
      const StepGraph g = build_step_graph(members, rule);
      CHECK(g.edges() == oracle::reduction(nodes, raw));
      CHECK(oracle::closure(nodes, g.edges()) == oracle::closure(nodes, raw));
      // Topological order respects every edge.
      const auto order = g.topological_order();
      REQUIRE(order.size() == members.size());
      for (const auto& [a, b] : g.edges()) {
        CHECK(std::find(order.begin(), order.end(), a) <
              std::find(order.begin(), order.end(), b));
      }
    }
  }
}
