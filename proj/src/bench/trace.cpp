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

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <stdexcept>

#include "cecollm/bench/bench.hpp"

namespace cecollm::bench {

using nlohmann::json;

void write_trace_jsonl(std::ostream& out, const std::vector<PromptTrace>& traces) {
  for (const auto& pt : traces) {
    for (const auto& t : pt.tokens) {
      json evals = json::array();
      for (const auto& e : t.evaluations) evals.push_back({{"exit", e.exit_index}, {"conf", e.conf}, {"token", e.token}});
      json line{{"prompt", pt.prompt_index},
                {"position", t.position},
                {"token", t.token},
                {"origin", t.cloud ? "cloud" : "exit"},
                {"exit_index", t.exit_index ? json(*t.exit_index) : json(nullptr)},
                {"evaluations", std::move(evals)},
                {"edge_ns", t.edge_time.count()},
                {"cloud_rtt_ns", t.cloud_round_trip.count()},
                {"cloud_ns", t.cloud_compute.count()}};
      out << line.dump() << '\n';
    }
  }
}

std::vector<PromptTrace> read_trace_jsonl(std::istream& in) {
  std::vector<PromptTrace> out;
  std::map<std::size_t, std::size_t> slot;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      edge::TokenTrace t;
      t.position = j.at("position").get<std::uint32_t>();
      t.token = j.at("token").get<TokenId>();
      t.cloud = j.at("origin").get<std::string>() == "cloud";
      if (!j.at("exit_index").is_null()) t.exit_index = j.at("exit_index").get<std::size_t>();
      for (const auto& e : j.at("evaluations")) {
        t.evaluations.push_back({e.at("exit").get<std::size_t>(), e.at("conf").get<double>(), e.at("token").get<TokenId>()});
      }
      t.edge_time = SimTime(j.value("edge_ns", std::int64_t{0}));
      t.cloud_round_trip = SimTime(j.value("cloud_rtt_ns", std::int64_t{0}));
      t.cloud_compute = SimTime(j.value("cloud_ns", std::int64_t{0}));
      const auto prompt = j.at("prompt").get<std::size_t>();
      auto [it, fresh] = slot.try_emplace(prompt, out.size());
      if (fresh) out.push_back({prompt, {}});
      out[it->second].tokens.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw std::invalid_argument("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return v[lo];
  return v[lo] + (v[hi] - v[lo]) * frac;
}

double ExitHistogram::fraction_at_least(double c) const {
  if (values.empty()) return 0.0;
  const auto n = std::count_if(values.begin(), values.end(), [c](double x) { return x >= c; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

std::vector<ExitHistogram> confidence_histogram(const std::vector<PromptTrace>& traces) {
  std::map<std::size_t, ExitHistogram> by_exit;
  for (const auto& pt : traces) {
    for (const auto& t : pt.tokens) {
      for (const auto& e : t.evaluations) {
        auto& h = by_exit[e.exit_index];
        h.exit_index = e.exit_index;
        const double c = std::clamp(e.conf, 0.0, 1.0);
        const auto bin = std::min<std::size_t>(static_cast<std::size_t>(c * kHistogramBins), kHistogramBins - 1);
        h.bins[bin] += 1;
        h.count += 1;
        h.values.push_back(e.conf);
      }
    }
  }
  if (by_exit.empty()) throw std::invalid_argument("no exit evaluations in the trace set");
  std::vector<ExitHistogram> out;
  for (auto& [_, h] : by_exit) {
    h.p25 = quantile(h.values, 0.25);
    h.p50 = quantile(h.values, 0.50);
    h.p75 = quantile(h.values, 0.75);
    out.push_back(std::move(h));
  }
  return out;
}

void write_histogram_csv(std::ostream& out, const std::vector<ExitHistogram>& hists) {
  out << "exit,count,p25,p50,p75,frac_ge_0.8";
  for (std::size_t b = 0; b < kHistogramBins; ++b) out << ",bin_" << std::setw(2) << std::setfill('0') << b;
  out << std::setfill(' ') << '\n' << std::setprecision(6);
  for (const auto& h : hists) {
    out << h.exit_index << ',' << h.count << ',' << h.p25 << ',' << h.p50 << ',' << h.p75 << ','
        << h.fraction_at_least(0.8);
    for (auto c : h.bins) out << ',' << c;
    out << '\n';
  }
}

}  // namespace cecollm::bench
