// Copyright 2026 The ddn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace ddn {

using Cell = std::variant<std::monostate, bool, std::int64_t, double, std::string, std::vector<double>>;

/// Tabular command output: {command, seed, config, rows}.
struct Report {
  std::string command;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Cell>> config;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  bool passed = true;  // false when a check in the report failed

  void add_config(std::string key, Cell value) { config.emplace_back(std::move(key), std::move(value)); }
};

enum class ReportFormat { Json, Csv, Text };

bool parse_format(const std::string& name, ReportFormat& out);

/// Numbers use 17 significant digits so that reports replay exactly.
std::string format_number(double v);

std::string render(const Report& report, ReportFormat format);

}  // namespace ddn
