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

#include "ddn/report.hpp"

#include <fmt/format.h>

#include <cmath>

namespace ddn {

namespace {

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          out += fmt::format("\\u{:04x}", c);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out += "\"";
  return out;
}

std::string json_number(double v) { return std::isfinite(v) ? format_number(v) : "null"; }

std::string json_cell(const Cell& cell) {
  struct Visitor {
    std::string operator()(std::monostate) const { return "null"; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return json_number(d); }
    std::string operator()(const std::string& s) const { return json_string(s); }
    std::string operator()(const std::vector<double>& v) const {
      std::string out = "[";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += json_number(v[i]);
      }
      return out + "]";
    }
  };
  return std::visit(Visitor{}, cell);
}

std::string plain_cell(const Cell& cell, const char* list_sep, bool brackets) {
  struct Visitor {
    const char* sep;
    bool brackets;
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(double d) const { return format_number(d); }
    std::string operator()(const std::string& s) const { return s; }
    std::string operator()(const std::vector<double>& v) const {
      std::string out = brackets ? "[" : "";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += format_number(v[i]);
      }
      return brackets ? out + "]" : out;
    }
  };
  return std::visit(Visitor{list_sep, brackets}, cell);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string text_value(const Cell& cell) {
  std::string v = plain_cell(cell, ",", true);
  if (std::holds_alternative<std::string>(cell) && v.find_first_of(" \"=") != std::string::npos) {
    return json_string(v);
  }
  return v;
}

std::string render_json(const Report& r) {
  std::string out = "{\n";
  out += "  \"command\": " + json_string(r.command) + ",\n";
  out += "  \"seed\": " + std::to_string(r.seed) + ",\n";
  out += "  \"config\": {";
  for (std::size_t i = 0; i < r.config.size(); ++i) {
    out += i ? ", " : "";
    out += json_string(r.config[i].first) + ": " + json_cell(r.config[i].second);
  }
  out += "},\n  \"rows\": [";
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    out += k ? ",\n    {" : "\n    {";
    for (std::size_t c = 0; c < r.columns.size() && c < r.rows[k].size(); ++c) {
      out += c ? ", " : "";
      out += json_string(r.columns[c]) + ": " + json_cell(r.rows[k][c]);
    }
    out += "}";
  }
  out += r.rows.empty() ? "]\n}\n" : "\n  ]\n}\n";
  return out;
}

std::string render_csv(const Report& r) {
  std::string out;
  for (std::size_t c = 0; c < r.columns.size(); ++c) {
    out += c ? "," : "";
    out += csv_field(r.columns[c]);
  }
  out += "\n";
  for (const auto& row : r.rows) {
    for (std::size_t c = 0; c < r.columns.size() && c < row.size(); ++c) {
      out += c ? "," : "";
      out += csv_field(plain_cell(row[c], ";", false));
    }
    out += "\n";
  }
  return out;
}

std::string render_text(const Report& r) {
  std::string out = "command=" + r.command + " seed=" + std::to_string(r.seed) + "\n";
  if (!r.config.empty()) {
    out += "config";
    for (const auto& [key, value] : r.config) out += " " + key + "=" + text_value(value);
    out += "\n";
  }
  for (std::size_t k = 0; k < r.rows.size(); ++k) {
    out += "row " + std::to_string(k);
    for (std::size_t c = 0; c < r.columns.size() && c < r.rows[k].size(); ++c) {
      out += " " + r.columns[c] + "=" + text_value(r.rows[k][c]);
    }
    out += "\n";
  }
  return out;
}

}  // namespace

bool parse_format(const std::string& name, ReportFormat& out) {
  if (name == "json") {
    out = ReportFormat::Json;
  } else if (name == "csv") {
    out = ReportFormat::Csv;
  } else if (name == "text") {
    out = ReportFormat::Text;
  } else {
    return false;
  }
  return true;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  return fmt::format("{:.17g}", v);
}

std::string render(const Report& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return render_json(report);
    case ReportFormat::Csv: return render_csv(report);
    case ReportFormat::Text: return render_text(report);
  }
  return {};
}

}  // namespace ddn
