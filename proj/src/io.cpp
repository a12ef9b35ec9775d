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

#include "kimdispatch/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "kimdispatch/text.hpp"

namespace kimdispatch::io {

namespace fs = std::filesystem;

namespace {

struct Line {
  int number = 0;
  std::string text;
};

/// Non-blank lines with `#` comments stripped.
std::vector<Line> content_lines(std::string_view content) {
  std::vector<Line> out;
  std::istringstream in{std::string(content)};
  std::string raw;
  int n = 0;
  while (std::getline(in, raw)) {
    ++n;
    if (const auto hash = raw.find('#'); hash != std::string::npos) {
      raw.erase(hash);
    }
    std::string t = text::trim(raw);
    if (!t.empty()) out.push_back({n, std::move(t)});
  }
  return out;
}

std::string canonical_header(std::string_view header) {
  std::string out;
  for (const auto& f : text::split(header, ',')) {
    if (!out.empty()) out += ',';
    out += f;
  }
  return out;
}

template <typename Fn>
auto at_line(const std::string& source, int line, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(source, line, e.what());
  }
}

void expect_fields(const std::vector<std::string>& f, std::size_t n,
                   const std::string& what) {
  if (f.size() != n) {
    throw std::invalid_argument(what + ": expected " + std::to_string(n) +
                                " fields, got " + std::to_string(f.size()));
  }
}

std::string checked_id(const std::string& id, const std::string& what) {
  if (!valid_identifier(id)) {
    throw std::invalid_argument(what + ": invalid identifier '" + id + "'");
  }
  return id;
}

int positive_int(std::string_view s, const std::string& what) {
  const long long v = text::parse_integer(s, what);
  if (v < 1 || v > (1LL << 30)) {
    throw std::invalid_argument(what + ": must be a positive integer");
  }
  return static_cast<int>(v);
}

ExecutionSite parse_site_fields(const std::vector<std::string>& f) {
  expect_fields(f, 5, "site");
  ExecutionSite s;
  s.site_id = checked_id(f[0], "site_id");
  s.cores_per_node = positive_int(f[1], "cores_per_node");
  s.max_walltime_minutes = positive_int(f[2], "max_walltime_minutes");
  s.node_sharing = text::parse_bool(f[3], "node_sharing");
  s.active = text::parse_bool(f[4], "active");
  return s;
}

std::string site_fields(const ExecutionSite& s) {
  return s.site_id + "," + std::to_string(s.cores_per_node) + "," +
         std::to_string(s.max_walltime_minutes) + "," +
         (s.node_sharing ? "true" : "false") + "," +
         (s.active ? "true" : "false");
}

}  // namespace

sim::Workload parse_workload(std::string_view content,
                             const std::string& source) {
  const auto lines = content_lines(content);
  if (lines.empty() || canonical_header(lines[0].text) != kWorkloadHeader) {
    throw ParseError(source, lines.empty() ? 1 : lines[0].number,
                     "expected header '" + std::string(kWorkloadHeader) + "'");
  }
  sim::Workload w;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& l = lines[i];
    w.jobs.push_back(at_line(source, l.number, [&] {
      const auto f = text::split(l.text, ',');
      expect_fields(f, 7, "job");
      JobSpec j;
      j.job_id = checked_id(f[0], "job_id");
      j.test_id = checked_id(f[1], "test_id");
      j.model_id = checked_id(f[2], "model_id");
      j.cores = positive_int(f[3], "cores");
      j.requested_minutes = positive_int(f[4], "requested_minutes");
      j.true_runtime_minutes = positive_int(f[5], "true_runtime_minutes");
      j.arrival_minute = text::parse_integer(f[6], "arrival_minute");
      if (j.arrival_minute < 0) {
        throw std::invalid_argument("arrival_minute: must be >= 0");
      }
      if (!seen.insert(j.job_id).second) {
        throw std::invalid_argument("duplicate job_id " + j.job_id);
      }
      return j;
    }));
  }
  return w;
}

std::string format_workload(const sim::Workload& workload) {
  std::string out(kWorkloadHeader);
  out += '\n';
  for (const auto& j : workload.jobs) {
    out += j.job_id + "," + j.test_id + "," + j.model_id + "," +
           std::to_string(j.cores) + "," + std::to_string(j.requested_minutes) +
           "," + std::to_string(j.true_runtime_minutes) + "," +
           std::to_string(j.arrival_minute) + "\n";
  }
  return out;
}

std::vector<ExecutionSite> parse_sites(std::string_view content,
                                       const std::string& source) {
  const auto lines = content_lines(content);
  if (lines.empty() || canonical_header(lines[0].text) != kSitesHeader) {
    throw ParseError(source, lines.empty() ? 1 : lines[0].number,
                     "expected header '" + std::string(kSitesHeader) + "'");
  }
  std::vector<ExecutionSite> sites;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    sites.push_back(at_line(source, lines[i].number, [&] {
      auto s = parse_site_fields(text::split(lines[i].text, ','));
      if (!seen.insert(s.site_id).second) {
        throw std::invalid_argument("duplicate site_id " + s.site_id);
      }
      return s;
    }));
  }
  return sites;
}

std::string format_sites(const std::vector<ExecutionSite>& sites) {
  std::string out(kSitesHeader);
  out += '\n';
  for (const auto& s : sites) out += site_fields(s) + "\n";
  return out;
}

sim::SimConfig parse_config(std::string_view content,
                            const std::string& source) {
  sim::SimConfig c;
  std::set<std::string> seen_sites;
  for (const Line& l : content_lines(content)) {
    at_line(source, l.number, [&] {
      const auto eq = l.text.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("expected 'key = value'");
      }
      const std::string key = text::trim(std::string_view(l.text).substr(0, eq));
      const std::string value =
          text::trim(std::string_view(l.text).substr(eq + 1));
      if (key == "seed") {
        c.seed = text::parse_unsigned(value, "seed");
      } else if (key == "grace") {
        c.grace_minutes = text::parse_integer(value, "grace");
      } else if (key == "tick") {
        c.tick_minutes = text::parse_integer(value, "tick");
      } else if (key == "horizon") {
        c.horizon_minutes = text::parse_integer(value, "horizon");
      } else if (key == "retry_cap") {
        c.retry_cap = positive_int(value, "retry_cap");
      } else if (key == "beneath") {
        if (value == "overlap") {
          c.beneath_rule = BeneathRule::CoreOverlap;
        } else if (value == "vertical") {
          c.beneath_rule = BeneathRule::VerticalOnly;
        } else {
          throw std::invalid_argument("beneath: expected overlap|vertical");
        }
      } else if (key == "policy") {
        c.policy = BundlePolicy::parse(value, c.policy);
      } else if (key == "site") {
        auto s = parse_site_fields(text::split(value, ','));
        if (!seen_sites.insert(s.site_id).second) {
          throw std::invalid_argument("duplicate site " + s.site_id);
        }
        c.sites.push_back(std::move(s));
      } else if (key == "wait") {
        const auto f = text::split(value, ',');
        if (f.size() < 2) throw std::invalid_argument("wait: too few fields");
        const std::string site = checked_id(f[0], "wait site");
        if (f[1] == "fixed") {
          expect_fields(f, 3, "wait");
          c.queue_wait[site] =
              sim::QueueWait::fixed(text::parse_integer(f[2], "wait minutes"));
        } else if (f[1] == "uniform") {
          expect_fields(f, 4, "wait");
          c.queue_wait[site] =
              sim::QueueWait::uniform(text::parse_integer(f[2], "wait lo"),
                                      text::parse_integer(f[3], "wait hi"));
        } else {
          throw std::invalid_argument("wait: expected fixed|uniform");
        }
      } else if (key == "fault") {
        const auto f = text::split(value, ',');
        sim::FaultSpec fault;
        if (f.empty()) throw std::invalid_argument("fault: empty");
        if (f[0] == "STEP_OVERRUN") {
          expect_fields(f, 3, "fault");
          fault.kind = sim::FaultKind::StepOverrun;
          fault.factor = text::parse_real(f[2], "overrun factor");
        } else if (f[0] == "NODE_FAULT") {
          expect_fields(f, 3, "fault");
          fault.kind = sim::FaultKind::NodeFault;
          fault.attempts = positive_int(f[2], "node fault attempts");
        } else if (f[0] == "GLOBAL_STALL") {
          expect_fields(f, 4, "fault");
          fault.kind = sim::FaultKind::GlobalStall;
          fault.from = text::parse_integer(f[2], "stall from");
          fault.to = text::parse_integer(f[3], "stall to");
        } else {
          throw std::invalid_argument("fault: unknown kind '" + f[0] + "'");
        }
        fault.target = checked_id(f[1], "fault target");
        c.faults.push_back(std::move(fault));
      } else if (key == "toggle") {
        const auto f = text::split(value, ',');
        expect_fields(f, 3, "toggle");
        sim::SiteToggle t;
        t.time = text::parse_integer(f[0], "toggle time");
        t.site_id = checked_id(f[1], "toggle site");
        if (f[2] == "active") {
          t.active = true;
        } else if (f[2] == "inactive") {
          t.active = false;
        } else {
          throw std::invalid_argument("toggle: expected active|inactive");
        }
        c.toggles.push_back(std::move(t));
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
      return 0;
    });
  }
  return c;
}

std::string format_config(const sim::SimConfig& c) {
  std::ostringstream out;
  out << "seed = " << c.seed << '\n'
      << "grace = " << c.grace_minutes << '\n'
      << "tick = " << c.tick_minutes << '\n'
      << "horizon = " << c.horizon_minutes << '\n'
      << "retry_cap = " << c.retry_cap << '\n'
      << "beneath = "
      << (c.beneath_rule == BeneathRule::CoreOverlap ? "overlap" : "vertical")
      << '\n'
      << "policy = " << c.policy.to_string() << '\n';
  for (const auto& s : c.sites) out << "site = " << site_fields(s) << '\n';
  for (const auto& [site, w] : c.queue_wait) {
    if (w.kind == sim::QueueWait::Kind::Fixed) {
      out << "wait = " << site << ",fixed," << w.lo << '\n';
    } else {
      out << "wait = " << site << ",uniform," << w.lo << ',' << w.hi << '\n';
    }
  }
  for (const auto& f : c.faults) {
    out << "fault = " << sim::to_string(f.kind) << ',' << f.target << ',';
    switch (f.kind) {
      case sim::FaultKind::StepOverrun:
        out << text::format_real(f.factor);
        break;
      case sim::FaultKind::NodeFault:
        out << f.attempts;
        break;
      case sim::FaultKind::GlobalStall:
        out << f.from << ',' << f.to;
        break;
    }
    out << '\n';
  }
  for (const auto& t : c.toggles) {
    out << "toggle = " << t.time << ',' << t.site_id << ','
        << (t.active ? "active" : "inactive") << '\n';
  }
  return out.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

std::vector<JobRow> job_rows(const sim::SimResult& result) {
  std::vector<JobRow> rows;
  rows.reserve(result.jobs.size());
  for (const auto& j : result.jobs) {
    JobRow r;
    r.job_id = j.job_id();
    r.test_id = j.test_id();
    r.model_id = j.model_id();
    r.state = std::string(to_string(j.state()));
    r.error = std::string(to_string(j.error()));
    r.attempts = j.attempts();
    r.doublings = j.doublings();
    r.timeouts = j.timeouts();
    r.rebinds = j.rebinds();
    r.original_minutes = j.original_minutes();
    r.requested_minutes = j.requested_minutes();
    r.ingested_at = j.ingested_at();
    r.finished_at = j.finished_at();
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_jobs_csv(const std::vector<JobRow>& rows) {
  std::ostringstream out;
  out << kJobsHeader << '\n';
  for (const auto& r : rows) {
    out << r.job_id << ',' << r.test_id << ',' << r.model_id << ',' << r.state
        << ',' << r.error << ',' << r.attempts << ',' << r.doublings << ','
        << r.timeouts << ',' << r.rebinds << ',' << r.original_minutes << ','
        << r.requested_minutes << ',' << r.ingested_at << ',';
    if (r.finished_at) out << *r.finished_at;
    out << ',';
    if (auto t = r.turnaround()) out << *t;
    out << '\n';
  }
  return out.str();
}

std::vector<JobRow> parse_jobs_csv(std::string_view content,
                                   const std::string& source) {
  const auto lines = content_lines(content);
  if (lines.empty() || canonical_header(lines[0].text) != kJobsHeader) {
    throw ParseError(source, lines.empty() ? 1 : lines[0].number,
                     "schema mismatch: expected header '" +
                         std::string(kJobsHeader) + "'");
  }
  std::vector<JobRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    rows.push_back(at_line(source, lines[i].number, [&] {
      const auto f = text::split(lines[i].text, ',');
      expect_fields(f, 14, "jobs row");
      JobRow r;
      r.job_id = f[0];
      r.test_id = f[1];
      r.model_id = f[2];
      r.state = f[3];
      r.error = f[4];
      r.attempts = static_cast<int>(text::parse_integer(f[5], "attempts"));
      r.doublings = static_cast<int>(text::parse_integer(f[6], "doublings"));
      r.timeouts = static_cast<int>(text::parse_integer(f[7], "timeouts"));
      r.rebinds = static_cast<int>(text::parse_integer(f[8], "rebinds"));
      r.original_minutes =
          static_cast<int>(text::parse_integer(f[9], "original_minutes"));
      r.requested_minutes =
          static_cast<int>(text::parse_integer(f[10], "requested_minutes"));
      r.ingested_at = text::parse_integer(f[11], "ingested_at");
      if (!f[12].empty()) {
        r.finished_at = text::parse_integer(f[12], "finished_at");
      }
      const auto t = r.turnaround();
      if (f[13].empty() != !t.has_value() ||
          (t && text::parse_integer(f[13], "turnaround") != *t)) {
        throw std::invalid_argument("turnaround inconsistent with timestamps");
      }
      return r;
    }));
  }
  return rows;
}

std::string format_metrics_csv(const sim::Metrics& metrics) {
  std::ostringstream out;
  out << kMetricsHeader << '\n';
  char waste[32];
  for (const auto& b : metrics.bundles) {
    std::snprintf(waste, sizeof waste, "%.6f", b.waste_fraction);
    out << b.bundle_id << ',' << b.site_id << ',' << b.n_jobs << ','
        << b.request_cores << ',' << b.request_minutes << ',' << waste << ','
        << b.completed << ',' << b.timeout << ',' << b.node_fault << ','
        << b.cancelled << ',' << b.failed << '\n';
  }
  return out.str();
}

std::string format_event_log(const sim::SimResult& result) {
  std::string out;
  for (const auto& line : result.event_log) {
    out += line;
    out += '\n';
  }
  for (const auto& d : result.diagnostics) {
    out += "DIAGNOSTIC " + d + "\n";
  }
  return out;
}

void write_run_outputs(const fs::path& dir, const sim::SimResult& result,
                       const sim::Metrics& metrics) {
  fs::create_directories(dir);
  write_file(dir / "metrics.csv", format_metrics_csv(metrics));
  write_file(dir / "jobs.csv", format_jobs_csv(job_rows(result)));
  write_file(dir / "events.log", format_event_log(result));
}

}  // namespace kimdispatch::io
