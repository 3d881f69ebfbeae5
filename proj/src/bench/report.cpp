// Copyright 2026 The cecollm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cecollm/bench/bench.hpp"

namespace cecollm::bench {

using nlohmann::json;

namespace {

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }
Stat stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double x = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "' in CSV");
  return x;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t x = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || end != s.data() + s.size()) throw std::invalid_argument("bad integer '" + s + "' in CSV");
  return x;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_type(const json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "number") return v.is_number();
  if (t == "integer") {
    if (v.is_number_integer()) return true;
    return v.is_number_float() && std::floor(v.get<double>()) == v.get<double>();
  }
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  return false;
}

void check(const json& v, const json& node, const json& root, const std::string& where,
           std::vector<std::string>& errors) {
  const json* resolved = &node;
  if (node.contains("$ref")) {
    const auto ref = node["$ref"].get<std::string>();
    if (ref.rfind("#/", 0) != 0) throw std::invalid_argument("only local $ref is supported: " + ref);
    resolved = &root.at(json::json_pointer(ref.substr(1)));
  }
  const json& schema = *resolved;
  if (schema.contains("type")) {
    const auto& t = schema["type"];
    bool ok = false;
    if (t.is_array()) {
      for (const auto& x : t) ok = ok || is_type(v, x.get<std::string>());
    } else {
      ok = is_type(v, t.get<std::string>());
    }
    if (!ok) {
      errors.push_back(where + ": expected type " + t.dump());
      return;
    }
  }
  if (schema.contains("const") && v != schema["const"]) errors.push_back(where + ": must equal " + schema["const"].dump());
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& x : schema["enum"]) found = found || x == v;
    if (!found) errors.push_back(where + ": " + v.dump() + " not in " + schema["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>()) {
      errors.push_back(where + ": " + v.dump() + " below minimum " + schema["minimum"].dump());
    }
    if (schema.contains("maximum") && x > schema["maximum"].get<double>()) {
      errors.push_back(where + ": " + v.dump() + " above maximum " + schema["maximum"].dump());
    }
  }
  if (v.is_object()) {
    if (schema.contains("required")) {
      for (const auto& k : schema["required"]) {
        if (!v.contains(k.get<std::string>())) errors.push_back(where + ": missing " + k.get<std::string>());
      }
    }
    const json props = schema.value("properties", json::object());
    for (const auto& [k, x] : v.items()) {
      if (props.contains(k)) {
        check(x, props[k], root, where + "." + k, errors);
      } else if (schema.contains("additionalProperties") && schema["additionalProperties"] == false) {
        errors.push_back(where + ": unexpected property " + k);
      }
    }
  }
  if (v.is_array()) {
    if (schema.contains("minItems") && v.size() < schema["minItems"].get<std::size_t>()) {
      errors.push_back(where + ": fewer than " + schema["minItems"].dump() + " items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < v.size(); ++i) check(v[i], schema["items"], root, where + "[" + std::to_string(i) + "]", errors);
    }
  }
}

}  // namespace

json to_json(const std::vector<MetricsReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    rows.push_back({{"scenario", r.scenario},
                    {"strategy", r.strategy},
                    {"theta", r.theta},
                    {"wire", r.wire},
                    {"upload_policy", r.upload_policy},
                    {"repetitions", r.repetitions},
                    {"prompts", r.prompts},
                    {"total_s", stat_json(r.total_s)},
                    {"cloud_s", stat_json(r.cloud_s)},
                    {"edge_s", stat_json(r.edge_s)},
                    {"comm_s", stat_json(r.comm_s)},
                    {"bytes_up", r.bytes_up},
                    {"bytes_down", r.bytes_down},
                    {"generated_tokens", r.generated_tokens},
                    {"cloud_request_count", r.cloud_request_count},
                    {"cloud_request_rate", r.cloud_request_rate},
                    {"exit_token_counts", r.exit_token_counts},
                    {"cloud_token_count", r.cloud_token_count},
                    {"disagreement_rate", r.disagreement_rate},
                    {"max_logit_deviation", r.max_logit_deviation},
                    {"availability_failures", r.availability_failures}});
  }
  return {{"format", "cecollm-report"}, {"version", 1}, {"rows", std::move(rows)}};
}

std::vector<MetricsReport> reports_from_json(const json& j) {
  std::vector<MetricsReport> out;
  for (const auto& x : j.at("rows")) {
    MetricsReport r;
    r.scenario = x.at("scenario").get<std::string>();
    r.strategy = x.at("strategy").get<std::string>();
    r.theta = x.at("theta").get<double>();
    r.wire = x.at("wire").get<std::string>();
    r.upload_policy = x.at("upload_policy").get<std::string>();
    r.repetitions = x.at("repetitions").get<std::uint32_t>();
    r.prompts = x.at("prompts").get<std::uint64_t>();
    r.total_s = stat_from(x.at("total_s"));
    r.cloud_s = stat_from(x.at("cloud_s"));
    r.edge_s = stat_from(x.at("edge_s"));
    r.comm_s = stat_from(x.at("comm_s"));
    r.bytes_up = x.at("bytes_up").get<std::uint64_t>();
    r.bytes_down = x.at("bytes_down").get<std::uint64_t>();
    r.generated_tokens = x.at("generated_tokens").get<std::uint64_t>();
    r.cloud_request_count = x.at("cloud_request_count").get<std::uint64_t>();
    r.cloud_request_rate = x.at("cloud_request_rate").get<double>();
    r.exit_token_counts = x.at("exit_token_counts").get<std::vector<std::uint64_t>>();
    r.cloud_token_count = x.at("cloud_token_count").get<std::uint64_t>();
    r.disagreement_rate = x.at("disagreement_rate").get<double>();
    r.max_logit_deviation = x.at("max_logit_deviation").get<double>();
    r.availability_failures = x.at("availability_failures").get<std::uint64_t>();
    out.push_back(std::move(r));
  }
  return out;
}

void write_csv(std::ostream& out, const std::vector<MetricsReport>& reports) {
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : reports) {
    out << r.strategy << ',' << fmt(r.theta) << ',' << fmt(r.total_s.mean) << ',' << fmt(r.total_s.std) << ','
        << fmt(r.cloud_s.mean) << ',' << fmt(r.edge_s.mean) << ',' << fmt(r.comm_s.mean) << ',' << r.bytes_up << ','
        << r.bytes_down << ',' << fmt(r.cloud_request_rate) << ',' << fmt(r.disagreement_rate) << '\n';
  }
}

std::vector<MetricsReport> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty CSV report");
  if (split_csv(line) != csv_columns()) throw std::invalid_argument("CSV header does not match the report columns");
  std::vector<MetricsReport> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv(line);
    if (c.size() != csv_columns().size()) throw std::invalid_argument("CSV row has " + std::to_string(c.size()) + " cells");
    MetricsReport r;
    r.strategy = c[0];
    r.theta = parse_double(c[1]);
    r.total_s = {parse_double(c[2]), parse_double(c[3])};
    r.cloud_s.mean = parse_double(c[4]);
    r.edge_s.mean = parse_double(c[5]);
    r.comm_s.mean = parse_double(c[6]);
    r.bytes_up = parse_u64(c[7]);
    r.bytes_down = parse_u64(c[8]);
    r.cloud_request_rate = parse_double(c[9]);
    r.disagreement_rate = parse_double(c[10]);
    out.push_back(std::move(r));
  }
  return out;
}

void export_report(const std::vector<MetricsReport>& reports, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path.string());
  if (format == ReportFormat::kCsv) {
    write_csv(out, reports);
  } else {
    out << to_json(reports).dump(2) << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

std::vector<std::string> validate_schema(const json& doc, const json& schema) {
  std::vector<std::string> errors;
  check(doc, schema, schema, "$", errors);
  return errors;
}

}  // namespace cecollm::bench
