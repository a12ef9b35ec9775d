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

#include "kimdispatch/accounting.hpp"

#include <fstream>
#include <sstream>

namespace kimdispatch {

namespace fs = std::filesystem;

std::string_view to_string(AccountingState s) {
  switch (s) {
    case AccountingState::Completed: return "COMPLETED";
    case AccountingState::Timeout: return "TIMEOUT";
    case AccountingState::Failed: return "FAILED";
    case AccountingState::Cancelled: return "CANCELLED";
  }
  return "?";
}

std::optional<AccountingState> parse_accounting_state(std::string_view word) {
  if (word == "COMPLETED") return AccountingState::Completed;
  if (word == "TIMEOUT") return AccountingState::Timeout;
  if (word == "FAILED") return AccountingState::Failed;
  if (word == "CANCELLED") return AccountingState::Cancelled;
  return std::nullopt;
}

std::string_view to_string(StepStatus s) {
  switch (s) {
    case StepStatus::Completed: return "COMPLETED";
    case StepStatus::Timeout: return "TIMEOUT";
    case StepStatus::NodeFault: return "NODE_FAULT";
    case StepStatus::Cancelled: return "CANCELLED";
    case StepStatus::Failed: return "FAILED";
  }
  return "?";
}

const AccountingRow* AccountingRecord::find(const std::string& job_id) const {
  for (const auto& r : rows) {
    if (r.job_id == job_id) return &r;
  }
  return nullptr;
}

std::string AccountingRecord::format() const {
  std::ostringstream out;
  out << "bundle_id " << bundle_id << '\n';
  for (const auto& r : rows) {
    out << r.job_id << ' ' << to_string(r.state) << ' ' << r.elapsed_minutes
        << ' ' << r.exit_code << '\n';
  }
  return out.str();
}

AccountingRecord AccountingRecord::parse(std::string_view text) {
  AccountingRecord rec;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::vector<std::string> words;
    for (std::string w; fields >> w;) words.push_back(w);
    if (words.empty()) continue;
    if (!have_header) {
      if (words.size() != 2 || words[0] != "bundle_id") {
        throw AccountingParseError(lineno, "expected 'bundle_id <id>'");
      }
      rec.bundle_id = words[1];
      have_header = true;
      continue;
    }
    if (words.size() != 4) {
      throw AccountingParseError(lineno, "expected 4 fields");
    }
    AccountingRow row;
    row.job_id = words[0];
    auto state = parse_accounting_state(words[1]);
    if (!state) {
      throw AccountingParseError(lineno, "unknown state '" + words[1] + "'");
    }
    row.state = *state;
    try {
      std::size_t used = 0;
      row.elapsed_minutes = std::stoi(words[2], &used);
      if (used != words[2].size() || row.elapsed_minutes < 0) throw 0;
      row.exit_code = std::stoi(words[3], &used);
      if (used != words[3].size()) throw 0;
    } catch (...) {
      throw AccountingParseError(lineno, "bad integer field");
    }
    if (rec.find(row.job_id)) {
      throw AccountingParseError(lineno, "duplicate step " + row.job_id);
    }
    rec.rows.push_back(std::move(row));
  }
  if (!have_header) throw AccountingParseError(lineno, "missing header");
  return rec;
}

StepOutcome classify_step(const std::string& job_id, const AccountingRow* row,
                          bool sentinel_present) {
  StepOutcome out;
  out.job_id = job_id;
  out.sentinel_present = sentinel_present;
  if (row == nullptr) {
    out.status = StepStatus::NodeFault;
    return out;
  }
  out.elapsed_minutes = row->elapsed_minutes;
  out.exit_code = row->exit_code;
  switch (row->state) {
    case AccountingState::Timeout: out.status = StepStatus::Timeout; break;
    case AccountingState::Cancelled: out.status = StepStatus::Cancelled; break;
    case AccountingState::Completed:
      out.status =
          sentinel_present ? StepStatus::Completed : StepStatus::NodeFault;
      break;
    case AccountingState::Failed:
      out.status = sentinel_present ? StepStatus::Failed : StepStatus::NodeFault;
      break;
  }
  return out;
}

void write_bundle_directory(const fs::path& root, const std::string& bundle_id,
                            const ArtifactSet& artifacts,
                            const std::optional<std::string>& makefile) {
  const fs::path dir = root / bundle_id;
  fs::create_directories(dir);
  if (makefile) {
    std::ofstream(dir / kMakefileName, std::ios::binary) << *makefile;
  }
  if (!artifacts.accounting_text.empty()) {
    std::ofstream(dir / kAccountingName, std::ios::binary)
        << artifacts.accounting_text;
  }
  for (const auto& [job, present] : artifacts.sentinels) {
    fs::create_directories(dir / job);
    if (present) std::ofstream(dir / job / kSentinelName);
  }
  for (const auto& [job, text] : artifacts.outputs) {
    fs::create_directories(dir / job);
    std::ofstream(dir / job / kOutputName, std::ios::binary) << text;
  }
}

ArtifactSet read_bundle_directory(const fs::path& bundle_dir,
                                  const std::vector<std::string>& member_ids) {
  ArtifactSet out;
  if (std::ifstream acct(bundle_dir / kAccountingName, std::ios::binary);
      acct) {
    std::ostringstream buf;
    buf << acct.rdbuf();
    out.accounting_text = buf.str();
  }
  for (const auto& id : member_ids) {
    out.sentinels[id] = fs::exists(bundle_dir / id / kSentinelName);
    if (std::ifstream log(bundle_dir / id / kOutputName, std::ios::binary);
        log) {
      std::ostringstream buf;
      buf << log.rdbuf();
      out.outputs[id] = buf.str();
    }
  }
  return out;
}

}  // namespace kimdispatch
