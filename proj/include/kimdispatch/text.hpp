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

// Small text helpers shared by the line-oriented file formats.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kimdispatch::text {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Shortest decimal form that parses back to the same double.
std::string format_real(double v);

/// Whole-string parses; std::nullopt-like failure is reported by throwing
/// std::invalid_argument with `what` naming the field.
long long parse_integer(std::string_view s, const std::string& what);
std::uint64_t parse_unsigned(std::string_view s, const std::string& what);
double parse_real(std::string_view s, const std::string& what);
bool parse_bool(std::string_view s, const std::string& what);

}  // namespace kimdispatch::text
