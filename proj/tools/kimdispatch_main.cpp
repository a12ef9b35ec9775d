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

// kimdispatch: pack a job list into one bundle, simulate the dispatcher
// against the simulated cluster, or summarize finished runs.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kimdispatch/bundling.hpp"
#include "kimdispatch/dispatcher.hpp"
#include "kimdispatch/io.hpp"
#include "kimdispatch/packing.hpp"
#include "kimdispatch/report.hpp"
#include "kimdispatch/simcluster.hpp"
#include "kimdispatch/stepgraph.hpp"
#include "kimdispatch/text.hpp"

namespace fs = std::filesystem;
using namespace kimdispatch;

namespace {

constexpr int kExitBadInput = 2;
constexpr int kExitNoFit = 3;

/// One character per core column and one row per `minutes_per_row` minutes,
/// sampled at the row floor, highest minutes first. '.' marks waste inside the bundle request.
std::string render_grid(const PackingBin& bin,
                        const std::vector<PlacedJob>& placed,
                        const std::map<std::string, char>& glyph,
                        int minutes_per_row) {
  const BoundingRequest box = bin.bounding();
  const int rows = (bin.height() + minutes_per_row - 1) / minutes_per_row;
  std::string out;
  for (int r = rows - 1; r >= 0; --r) {
    const int mid = r * minutes_per_row;
    char label[16];
    std::snprintf(label, sizeof label, "%5d |", r * minutes_per_row);
    out += label;
    for (int c = 0; c < bin.width(); ++c) {
      char cell = (c < box.cores && mid < box.minutes) ? '.' : ' ';
      for (const auto& p : placed) {
        const Placement& pl = p.placement;
        if (c >= pl.left() && c < pl.right() && mid >= pl.bottom() &&
            mid < pl.top()) {
          cell = glyph.at(p.job_id);
          break;
        }
      }
      out += cell;
    }
    out += "|\n";
  }
  return out;
}

int run_pack(const std::string& sites_path, const std::string& site_name,
             const std::string& bin_spec, const std::string& workload_path,
             const std::string& policy_text, const std::string& out_dir,
             int minutes_per_row) {
  const BundlePolicy policy = BundlePolicy::parse(policy_text);
  ExecutionSite site;
  if (!bin_spec.empty()) {
    const auto x = bin_spec.find('x');
    if (x == std::string::npos) {
      throw std::invalid_argument("--bin expects <cores>x<minutes>");
    }
    site.site_id = "bin";
    site.cores_per_node =
        static_cast<int>(text::parse_integer(bin_spec.substr(0, x), "--bin"));
    site.max_walltime_minutes =
        static_cast<int>(text::parse_integer(bin_spec.substr(x + 1), "--bin"));
  } else {
    const auto sites =
        io::parse_sites(io::read_file(sites_path), sites_path);
    if (sites.empty()) throw std::invalid_argument("no sites in " + sites_path);
    const ExecutionSite* chosen = &sites.front();
    if (!site_name.empty()) {
      chosen = nullptr;
      for (const auto& s : sites) {
        if (s.site_id == site_name) chosen = &s;
      }
      if (!chosen) throw std::invalid_argument("unknown site " + site_name);
    }
    site = *chosen;
  }
  const auto workload =
      io::parse_workload(io::read_file(workload_path), workload_path);

  PackingBin bin(site.cores_per_node, site.max_walltime_minutes);
  std::vector<PlacedJob> placed;
  std::vector<std::string> skipped;
  std::map<std::string, std::string> commands;
  for (const auto& spec : workload.jobs) {
    const ResourceRect rect =
        buffered({spec.cores, spec.requested_minutes},
                 policy.timeout_buffer_minutes);
    if (!bin.admits(rect)) {
      std::cerr << "error: job " << spec.job_id << " (" << rect.cores << "x"
                << rect.minutes << " incl. buffer) does not fit site "
                << site.site_id << " (" << site.cores_per_node << "x"
                << site.max_walltime_minutes << ")\n";
      return kExitNoFit;
    }
    if (auto p = bin.insert(rect)) {
      placed.push_back({spec.job_id, *p});
      commands[spec.job_id] = step_command(JobRecord(spec, 0));
    } else {
      skipped.push_back(spec.job_id);
    }
  }
  if (placed.empty()) {
    std::cout << "no jobs packed\n";
    return 0;
  }

  const StepGraph graph = build_step_graph(placed);
  const std::string makefile = emit_make(graph, commands);
  const BoundingRequest box = bin.bounding();

  std::map<std::string, char> glyph;
  const std::string alphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  bool single_chars = true;
  for (const auto& p : placed) single_chars &= p.job_id.size() == 1;
  for (std::size_t i = 0; i < placed.size(); ++i) {
    glyph[placed[i].job_id] =
        single_chars ? placed[i].job_id[0] : alphabet[i % alphabet.size()];
  }

  std::cout << "site " << site.site_id << " bin " << site.cores_per_node
            << "x" << site.max_walltime_minutes << " buffer "
            << policy.timeout_buffer_minutes << "\n\nplacements:\n";
  for (const auto& p : placed) {
    const Placement& pl = p.placement;
    std::cout << "  " << p.job_id << " [" << glyph[p.job_id] << "] "
              << pl.rect.cores << "x" << pl.rect.minutes << " at (" << pl.x
              << "," << pl.y << ")\n";
  }
  for (const auto& id : skipped) {
    std::cout << "  " << id << " skipped: no room left in this bundle\n";
  }
  std::cout << "\nedges:";
  if (graph.edges().empty()) std::cout << " (none)";
  for (const auto& [from, to] : graph.edges()) {
    std::cout << ' ' << from << "->" << to;
  }
  char waste[32];
  std::snprintf(waste, sizeof waste, "%.4f", bin.waste_fraction());
  std::cout << "\nrequest: " << box.cores << " cores x " << box.minutes
            << " minutes\nwaste: " << waste << "\n\n"
            << render_grid(bin, placed, glyph, minutes_per_row) << '\n'
            << makefile;

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    io::write_file(fs::path(out_dir) / "Makefile", makefile);
    std::string csv = "job_id,x,y,cores,minutes\n";
    for (const auto& p : placed) {
      csv += p.job_id + "," + std::to_string(p.placement.x) + "," +
             std::to_string(p.placement.y) + "," +
             std::to_string(p.placement.rect.cores) + "," +
             std::to_string(p.placement.rect.minutes) + "\n";
    }
    io::write_file(fs::path(out_dir) / "placements.csv", csv);
  }
  return 0;
}

int run_simulate(const std::string& config_path,
                 const std::string& workload_path,
                 const std::string& sites_path, const std::string& out_dir,
                 const std::optional<std::uint64_t>& seed,
                 const std::string& policy_text,
                 const std::optional<Minute>& horizon, bool materialize) {
  sim::SimConfig config;
  if (!config_path.empty()) {
    config = io::parse_config(io::read_file(config_path), config_path);
  }
  if (!sites_path.empty()) {
    for (auto& s : io::parse_sites(io::read_file(sites_path), sites_path)) {
      auto it = std::find_if(config.sites.begin(), config.sites.end(),
                             [&](const auto& c) { return c.site_id == s.site_id; });
      if (it != config.sites.end()) {
        *it = std::move(s);
      } else {
        config.sites.push_back(std::move(s));
      }
    }
  }
  if (seed) config.seed = *seed;
  if (!policy_text.empty()) {
    config.policy = BundlePolicy::parse(policy_text, config.policy);
  }
  if (horizon) config.horizon_minutes = *horizon;
  if (config.sites.empty()) {
    throw std::invalid_argument("no execution sites configured");
  }
  if (materialize && !out_dir.empty()) {
    config.materialize_dir = fs::path(out_dir) / "bundles";
  }
  const auto workload =
      io::parse_workload(io::read_file(workload_path), workload_path);

  const sim::SimResult result = sim::run(config, workload);
  const sim::Metrics metrics = sim::compute_metrics(result);
  if (!out_dir.empty()) io::write_run_outputs(out_dir, result, metrics);

  const RunSummary summary = summarize("this-run", io::job_rows(result));
  std::cout << format_summary_table({summary});
  std::cout << "bundles " << metrics.bundles.size() << "  timeouts "
            << metrics.timeouts << "  rebinds " << metrics.rebinds
            << "  cancellations " << metrics.cancellations
            << "  node_faults " << metrics.node_faults
            << "  core-minutes requested " << metrics.core_minutes_requested
            << " consumed " << metrics.core_minutes_consumed << '\n';
  for (const auto& [site, n] : metrics.bundles_per_site) {
    std::cout << "  site " << site << ": " << n << " bundles\n";
  }
  for (const auto& d : result.diagnostics) {
    std::cerr << "diagnostic: " << d << '\n';
  }
  for (const auto& v : result.audit_violations) {
    std::cerr << "audit: " << v << '\n';
  }
  return result.audit_violations.empty() ? 0 : 1;
}

int run_report(const std::vector<std::string>& inputs,
               const std::string& out_path) {
  std::vector<std::vector<io::JobRow>> runs;
  std::vector<RunSummary> rows;
  for (const auto& path : inputs) {
    runs.push_back(io::parse_jobs_csv(io::read_file(path), path));
    rows.push_back(summarize(path, runs.back()));
  }
  rows.push_back(aggregate(runs));
  std::cout << format_summary_table(rows);
  if (!out_path.empty()) {
    std::string csv(kSummaryHeader);
    csv += '\n';
    for (const auto& r : rows) csv += format_summary_row(r) + '\n';
    io::write_file(out_path, csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Job bundling dispatcher with a simulated cluster backend"};
  app.require_subcommand(1);

  std::string sites_path, site_name, bin_spec, workload_path, policy_text,
      out_dir, config_path;
  int minutes_per_row = 10;
  std::optional<std::uint64_t> seed;
  std::optional<Minute> horizon;
  bool no_materialize = false;
  std::vector<std::string> report_inputs;
  std::string report_out;

  auto* pack = app.add_subcommand("pack", "Pack a job list into one bundle");
  pack->add_option("--sites", sites_path, "Site registry CSV");
  pack->add_option("--site", site_name, "Site id (default: first site)");
  pack->add_option("--bin", bin_spec, "Bin as <cores>x<minutes> instead of --sites");
  pack->add_option("--workload", workload_path, "Workload CSV")->required();
  pack->add_option("--policy", policy_text, "Policy overrides");
  pack->add_option("--out", out_dir, "Write Makefile and placements.csv here");
  pack->add_option("--grid", minutes_per_row, "Minutes per grid row")
      ->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Run the simulated cluster");
  simulate->add_option("--config", config_path, "Simulation config");
  simulate->add_option("--workload", workload_path, "Workload CSV")->required();
  simulate->add_option("--sites", sites_path, "Site registry CSV");
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--seed", seed, "Seed for every random draw");
  simulate->add_option("--policy", policy_text, "Policy overrides");
  simulate->add_option("--horizon", horizon, "Stop after this many minutes");
  simulate->add_flag("--no-materialize", no_materialize,
                     "Skip writing bundle directories");

  auto* report = app.add_subcommand("report", "Summarize jobs.csv files");
  report->add_option("inputs", report_inputs, "jobs.csv files")->required();
  report->add_option("--out", report_out, "Write the summary CSV here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pack) {
      if (sites_path.empty() == bin_spec.empty()) {
        std::cerr << "error: pack needs exactly one of --sites or --bin\n";
        return kExitBadInput;
      }
      return run_pack(sites_path, site_name, bin_spec, workload_path,
                      policy_text, out_dir, minutes_per_row);
    }
    if (*simulate) {
      return run_simulate(config_path, workload_path, sites_path, out_dir,
                          seed, policy_text, horizon, !no_materialize);
    }
    return run_report(report_inputs, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
}
