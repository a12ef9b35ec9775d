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

// Summaries over jobs.csv rows, per run and pooled across runs.

#pragma once

#include <string>
#include <vector>

#include "kimdispatch/io.hpp"

namespace kimdispatch {

struct RunSummary {
  std::string label;
  std::size_t jobs = 0;
  std::size_t completed = 0;
  std::size_t errored = 0;
  std::size_t live = 0;
  double mean_turnaround = 0.0;
  double p95_turnaround = 0.0;
  double max_turnaround = 0.0;
  double mean_attempts = 0.0;
  long long doublings = 0;
  long long rebinds = 0;
};

RunSummary summarize(const std::string& label,
                     const std::vector<io::JobRow>& rows);

/// Pooled summary over every row of every run.
RunSummary aggregate(const std::vector<std::vector<io::JobRow>>& runs);

inline constexpr std::string_view kSummaryHeader =
    "run,jobs,completed,errored,live,mean_turnaround,p95_turnaround,"
    "max_turnaround,mean_attempts,doublings,rebinds";

std::string format_summary_row(const RunSummary& s);

/// Fixed-width table for terminals.
std::string format_summary_table(const std::vector<RunSummary>& rows);

}  // namespace kimdispatch
