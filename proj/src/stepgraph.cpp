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

#include "kimdispatch/stepgraph.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace kimdispatch {

namespace {

bool open_intervals_meet(int a_lo, int a_hi, int b_lo, int b_hi) {
  return a_lo < b_hi && b_lo < a_hi;
}

}  // namespace

Precedence beneath_relation(std::span<const PlacedJob> members,
                            BeneathRule rule) {
  Precedence out;
  for (const auto& lower : members) {
    for (const auto& upper : members) {
      if (&lower == &upper) continue;
      const Placement& k = lower.placement;
      const Placement& j = upper.placement;
      if (k.top() > j.bottom()) continue;
      if (rule == BeneathRule::CoreOverlap &&
          !open_intervals_meet(k.left(), k.right(), j.left(), j.right())) {
        continue;
      }
      out.emplace(lower.job_id, upper.job_id);
    }
  }
  return out;
}

StepGraph::StepGraph(std::vector<std::string> nodes, Precedence edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
}

std::vector<std::string> StepGraph::prerequisites(
    const std::string& job_id) const {
  std::vector<std::string> out;
  for (const auto& [from, to] : edges_) {
    if (to == job_id) out.push_back(from);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> StepGraph::topological_order() const {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> outgoing;
  for (const auto& n : nodes_) indegree[n] = 0;
  for (const auto& [from, to] : edges_) {
    ++indegree[to];
    outgoing[from].push_back(to);
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>>
      ready;
  for (const auto& [n, d] : indegree) {
    if (d == 0) ready.push(n);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string n = ready.top();
    ready.pop();
    for (const auto& m : outgoing[n]) {
      if (--indegree[m] == 0) ready.push(m);
    }
    order.push_back(std::move(n));
  }
  if (order.size() != indegree.size()) {
    throw std::logic_error("StepGraph: cycle detected");
  }
  return order;
}

StepGraph reduce(std::vector<std::string> nodes, const Precedence& relation) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;

  const std::size_t n = nodes.size();
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (const auto& [from, to] : relation) {
    auto f = index.find(from);
    auto t = index.find(to);
    if (f == index.end() || t == index.end()) {
      throw std::invalid_argument("reduce: edge references unknown node");
    }
    reach[f->second][t->second] = 1;
  }
  // Warshall closure.
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!reach[i][k]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[k][j]) reach[i][j] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (reach[i][i]) {
      throw std::invalid_argument("reduce: relation is cyclic");
    }
  }

  Precedence kept;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!reach[i][j]) continue;
      bool covered = false;
      for (std::size_t w = 0; w < n && !covered; ++w) {
        covered = reach[i][w] && reach[w][j];
      }
      if (!covered) kept.emplace(nodes[i], nodes[j]);
    }
  }
  return StepGraph(std::move(nodes), std::move(kept));
}

StepGraph build_step_graph(std::span<const PlacedJob> members,
                           BeneathRule rule) {
  std::vector<std::string> ids;
  ids.reserve(members.size());
  for (const auto& m : members) ids.push_back(m.job_id);
  return reduce(std::move(ids), beneath_relation(members, rule));
}

std::string emit_make(const StepGraph& graph,
                      const std::map<std::string, std::string>& commands) {
  for (const auto& n : graph.nodes()) {
    if (!commands.contains(n)) {
      throw std::invalid_argument("emit_make: no command for job " + n);
    }
  }
  std::ostringstream out;
  out << "# Bundle step schedule. A step runs once every step packed\n"
      << "# beneath it has finished.\n\n";
  out << ".PHONY: all";
  for (const auto& n : graph.nodes()) out << ' ' << n;
  out << "\n\nall:";
  for (const auto& n : graph.nodes()) out << ' ' << n;
  out << "\n";
  for (const auto& n : graph.nodes()) {
    out << '\n' << n << ':';
    for (const auto& p : graph.prerequisites(n)) out << ' ' << p;
    out << "\n\t" << commands.at(n) << '\n';
  }
  return out.str();
}

}  // namespace kimdispatch
