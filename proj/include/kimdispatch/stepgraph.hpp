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

// Intra-bundle execution order derived from packing geometry.
//
// A step may not start until every step packed beneath it (in the same core
// band) has finished. The direct dependencies are emitted as a make script.

#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kimdispatch/packing.hpp"

namespace kimdispatch {

struct PlacedJob {
  std::string job_id;
  Placement placement;
};

enum class BeneathRule {
  // K precedes J when K.top <= J.bottom and their open core intervals
  // intersect.
  CoreOverlap,
  // K precedes J whenever K.top <= J.bottom, regardless of cores.
  VerticalOnly,
};

/// Ordered (prerequisite, dependent) pairs.
using Precedence = std::set<std::pair<std::string, std::string>>;

Precedence beneath_relation(std::span<const PlacedJob> members,
                            BeneathRule rule = BeneathRule::CoreOverlap);

class StepGraph {
 public:
  StepGraph() = default;
  StepGraph(std::vector<std::string> nodes, Precedence edges);

  /// Sorted lexicographically.
  const std::vector<std::string>& nodes() const { return nodes_; }
  const Precedence& edges() const { return edges_; }

  std::vector<std::string> prerequisites(const std::string& job_id) const;

  /// Kahn's algorithm, lexicographically smallest ready node first.
  std::vector<std::string> topological_order() const;

 private:
  std::vector<std::string> nodes_;
  Precedence edges_;
};

/// Transitive reduction of `relation` over `nodes`. The relation need not be
/// transitively closed; it must be acyclic (std::invalid_argument otherwise).
StepGraph reduce(std::vector<std::string> nodes, const Precedence& relation);

/// beneath_relation followed by reduce.
StepGraph build_step_graph(std::span<const PlacedJob> members,
                           BeneathRule rule = BeneathRule::CoreOverlap);

/// Make-syntax script: one phony target per job, prerequisites are the
/// reduced incoming edges, plus an `all` target. Throws std::invalid_argument
/// if a node has no command.
std::string emit_make(const StepGraph& graph,
                      const std::map<std::string, std::string>& commands);

}  // namespace kimdispatch
