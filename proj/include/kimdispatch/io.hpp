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

// Line-oriented input files and CSV outputs.
//
// Workload (CSV, header required):
//   job_id,test_id,model_id,cores,requested_minutes,true_runtime_minutes,arrival_minute
//
// Site registry (CSV, header required):
//   site_id,cores_per_node,max_walltime_minutes,node_sharing,active
//
// Simulation config (`key = value`, `#` comments, repeatable keys marked *):
//   seed = 42
//   grace = 5
//   tick = 1
//   horizon = 100000
//   retry_cap = 10
//   beneath = overlap            (or: vertical)
//   policy = min_jobs=5,min_fill=0.8,flush=60,buffer=5,heartbeat=2
//   site = S1,6,100,false,true           *  same fields as the registry
//   wait = S1,uniform,10,60              *  or: S1,fixed,0
//   fault = STEP_OVERRUN,j3,3            *  true-runtime multiplier
//   fault = NODE_FAULT,j2,1              *  executions losing the sentinel
//   fault = GLOBAL_STALL,S1,100,400      *  window [from, to)
//   toggle = 500,S1,inactive             *  site (de)activation at a minute

#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kimdispatch/simcluster.hpp"

namespace kimdispatch::io {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::string source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}
  const std::string& source() const { return source_; }
  int line() const { return line_; }

 private:
  std::string source_;
  int line_;
};

inline constexpr std::string_view kWorkloadHeader =
    "job_id,test_id,model_id,cores,requested_minutes,true_runtime_minutes,"
    "arrival_minute";
inline constexpr std::string_view kSitesHeader =
    "site_id,cores_per_node,max_walltime_minutes,node_sharing,active";
inline constexpr std::string_view kMetricsHeader =
    "bundle_id,site_id,n_jobs,request_cores,request_minutes,waste_fraction,"
    "completed,timeout,node_fault,cancelled,failed";
inline constexpr std::string_view kJobsHeader =
    "job_id,test_id,model_id,state,error,attempts,doublings,timeouts,rebinds,"
    "original_minutes,requested_minutes,ingested_at,finished_at,turnaround";

/// Parsers throw ParseError carrying `source` and a 1-based line number.
sim::Workload parse_workload(std::string_view content,
                             const std::string& source = "workload");
std::string format_workload(const sim::Workload& workload);

std::vector<ExecutionSite> parse_sites(std::string_view content,
                                       const std::string& source = "sites");
std::string format_sites(const std::vector<ExecutionSite>& sites);

sim::SimConfig parse_config(std::string_view content,
                            const std::string& source = "config");
std::string format_config(const sim::SimConfig& config);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// One row of jobs.csv.
struct JobRow {
  std::string job_id;
  std::string test_id;
  std::string model_id;
  std::string state;
  std::string error;
  int attempts = 0;
  int doublings = 0;
  int timeouts = 0;
  int rebinds = 0;
  int original_minutes = 0;
  int requested_minutes = 0;
  Minute ingested_at = 0;
  std::optional<Minute> finished_at;

  std::optional<Minute> turnaround() const {
    if (!finished_at) return std::nullopt;
    return *finished_at - ingested_at;
  }
  friend bool operator==(const JobRow&, const JobRow&) = default;
};

std::vector<JobRow> job_rows(const sim::SimResult& result);
std::string format_jobs_csv(const std::vector<JobRow>& rows);
/// Throws ParseError on a header or field mismatch.
std::vector<JobRow> parse_jobs_csv(std::string_view content,
                                   const std::string& source = "jobs.csv");

std::string format_metrics_csv(const sim::Metrics& metrics);
std::string format_event_log(const sim::SimResult& result);

/// Writes metrics.csv, jobs.csv and events.log into `dir`.
void write_run_outputs(const std::filesystem::path& dir,
                       const sim::SimResult& result,
                       const sim::Metrics& metrics);

}  // namespace kimdispatch::io
