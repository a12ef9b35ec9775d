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

// Scheduler accounting records, sentinel files and the per-bundle directory
// returned by a backend.
//
// Accounting file `accounting.txt`:
//
//   bundle_id <id>
//   <job_id> <STATE> <elapsed_minutes> <exit_code>
//   ...
//
// Directory layout: `<bundle_id>/accounting.txt`, `<bundle_id>/Makefile`,
// and one `<bundle_id>/<job_id>/` per step holding `output.log` and, when the
// step concluded normally, the `kim-done` sentinel.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kimdispatch {

inline constexpr std::string_view kSentinelName = "kim-done";
inline constexpr std::string_view kAccountingName = "accounting.txt";
inline constexpr std::string_view kMakefileName = "Makefile";
inline constexpr std::string_view kOutputName = "output.log";

enum class AccountingState { Completed, Timeout, Failed, Cancelled };

std::string_view to_string(AccountingState s);
std::optional<AccountingState> parse_accounting_state(std::string_view word);

struct AccountingRow {
  std::string job_id;
  AccountingState state = AccountingState::Completed;
  int elapsed_minutes = 0;
  int exit_code = 0;
  friend bool operator==(const AccountingRow&, const AccountingRow&) = default;
};

class AccountingParseError : public std::runtime_error {
 public:
  AccountingParseError(int line, const std::string& what)
      : std::runtime_error("accounting line " + std::to_string(line) + ": " +
                           what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct AccountingRecord {
  std::string bundle_id;
  std::vector<AccountingRow> rows;

  const AccountingRow* find(const std::string& job_id) const;
  std::string format() const;
  /// Throws AccountingParseError.
  static AccountingRecord parse(std::string_view text);
  friend bool operator==(const AccountingRecord&,
                         const AccountingRecord&) = default;
};

/// What comes back from a backend for one bundle.
struct ArtifactSet {
  std::string accounting_text;
  std::map<std::string, bool> sentinels;
  std::map<std::string, std::string> outputs;
  friend bool operator==(const ArtifactSet&, const ArtifactSet&) = default;
};

enum class StepStatus { Completed, Timeout, NodeFault, Cancelled, Failed };

std::string_view to_string(StepStatus s);

struct StepOutcome {
  std::string job_id;
  StepStatus status = StepStatus::NodeFault;
  int elapsed_minutes = 0;
  int exit_code = 0;
  bool sentinel_present = false;
};

/// Combines the accounting row (if any) with the sentinel flag.
StepOutcome classify_step(const std::string& job_id, const AccountingRow* row,
                          bool sentinel_present);

/// Writes the artifact set (and optional make script) under
/// `root/<bundle_id>/`.
void write_bundle_directory(const std::filesystem::path& root,
                            const std::string& bundle_id,
                            const ArtifactSet& artifacts,
                            const std::optional<std::string>& makefile = {});

/// Reads `bundle_dir` back. Sentinel flags are reported for every id in
/// `member_ids`; a missing accounting file yields empty accounting text.
ArtifactSet read_bundle_directory(const std::filesystem::path& bundle_dir,
                                  const std::vector<std::string>& member_ids);

}  // namespace kimdispatch
