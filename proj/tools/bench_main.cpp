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

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>

#include "cecollm/bench/bench.hpp"

using namespace cecollm;

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

int cmd_run(const std::string& scenario_file, const std::string& json_out, const std::string& csv_out,
            const std::string& trace_out, const std::string& hist_out) {
  const auto scenarios = bench::load_scenarios(scenario_file);
  std::vector<bench::MetricsReport> reports;
  std::vector<bench::PromptTrace> traces;
  for (const auto& sc : scenarios) {
    std::cerr << "running " << sc.name << " [" << edge::to_string(sc.mode) << "] x" << sc.repetitions << std::endl;
    auto out = bench::run_scenario(sc);
    reports.push_back(out.report);
    if (sc.mode == edge::Mode::kCollaborative || sc.mode == edge::Mode::kStandalone) {
      for (auto& t : out.traces) traces.push_back(std::move(t));
    }
  }
  bench::write_csv(std::cout, reports);
  if (!json_out.empty()) bench::export_report(reports, bench::ReportFormat::kJson, json_out);
  if (!csv_out.empty()) bench::export_report(reports, bench::ReportFormat::kCsv, csv_out);
  if (!trace_out.empty()) {
    auto f = open_out(trace_out);
    bench::write_trace_jsonl(f, traces);
  }
  if (!hist_out.empty()) {
    auto f = open_out(hist_out);
    bench::write_histogram_csv(f, bench::confidence_histogram(traces));
  }
  return 0;
}

int cmd_bytes(std::uint64_t p, std::uint64_t t, std::uint64_t d, const std::string& precision,
              const std::string& strategy, std::int64_t requests) {
  const auto enc = edge::parse_wire_precision(precision);
  const std::optional<std::uint64_t> r = requests < 0 ? std::nullopt : std::optional<std::uint64_t>(requests);
  auto show = [&](bench::Strategy s, codec::WireEncoding e) {
    const auto b = bench::analytic_bytes(p, t, d, e, s, r);
    std::cout << std::left << std::setw(11) << bench::to_string(s) << " payload_up=" << b.payload_up
              << " framed_up=" << b.framed_up << " framed_down=" << b.framed_down
              << " framed_total=" << b.framed_total() << " (" << std::fixed << std::setprecision(2)
              << static_cast<double>(b.payload_up) / 1024.0 << " KB payload)\n";
    return b;
  };
  if (strategy != "compare") {
    show(bench::parse_strategy(strategy), enc);
    return 0;
  }
  const auto naive = show(bench::Strategy::kNaive, codec::WireEncoding::kF32);
  const auto ce = show(bench::Strategy::kCeCollm, enc);
  if (naive.payload_up > 0) {
    std::cout << "payload reduction " << std::setprecision(4)
              << 100.0 * (1.0 - static_cast<double>(ce.payload_up) / static_cast<double>(naive.payload_up)) << "%\n";
  }
  return 0;
}

int cmd_hist(const std::string& trace, const std::string& out) {
  std::ifstream in(trace);
  if (!in) throw std::runtime_error("cannot open " + trace);
  const auto hists = bench::confidence_histogram(bench::read_trace_jsonl(in));
  if (out.empty()) {
    bench::write_histogram_csv(std::cout, hists);
  } else {
    auto f = open_out(out);
    bench::write_histogram_csv(f, hists);
  }
  return 0;
}

int cmd_validate(const std::string& report, const std::string& schema) {
  std::ifstream r(report), s(schema);
  if (!r) throw std::runtime_error("cannot open " + report);
  if (!s) throw std::runtime_error("cannot open " + schema);
  const auto errors = bench::validate_schema(nlohmann::json::parse(r), nlohmann::json::parse(s));
  for (const auto& e : errors) std::cerr << e << '\n';
  std::cout << (errors.empty() ? "valid" : "invalid") << '\n';
  return errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Benchmark harness: scenarios, byte model, confidence histograms"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run every scenario in a config file");
  std::string scenario, json_out, csv_out, trace_out, hist_out;
  run->add_option("scenario", scenario)->required()->check(CLI::ExistingFile);
  run->add_option("--json", json_out, "JSON report path");
  run->add_option("--csv", csv_out, "CSV report path");
  run->add_option("--trace-out", trace_out, "edge-side traces (JSON lines)");
  run->add_option("--hist-out", hist_out, "confidence histogram CSV");

  auto* bytes = app.add_subcommand("bytes", "analytic byte model for one prompt");
  std::uint64_t p = 30, t = 100, d = 4096;
  std::string precision = "f16", strategy = "compare";
  std::int64_t requests = -1;
  bytes->add_option("--prompt-len", p);
  bytes->add_option("--new-tokens", t);
  bytes->add_option("--hidden", d);
  bytes->add_option("--precision", precision)->check(CLI::IsMember({"f16", "f32"}));
  bytes->add_option("--strategy", strategy)->check(CLI::IsMember({"compare", "naive", "ce-collm", "cloud-only"}));
  bytes->add_option("--requests", requests, "ce-collm offloads (default: every token)");

  auto* hist = app.add_subcommand("hist", "confidence histogram of a trace file");
  std::string trace, hist_csv;
  hist->add_option("trace", trace)->required()->check(CLI::ExistingFile);
  hist->add_option("--out", hist_csv);

  auto* prompts = app.add_subcommand("prompts", "write a synthetic prompt set");
  std::size_t count = 100, lo = 13, hi = 43;
  std::uint64_t seed = 1;
  std::string out;
  prompts->add_option("--count", count);
  prompts->add_option("--min-len", lo);
  prompts->add_option("--max-len", hi);
  prompts->add_option("--seed", seed);
  prompts->add_option("--out", out)->required();

  auto* validate = app.add_subcommand("validate", "check a JSON report against the schema");
  std::string report, schema = "schemas/report.schema.json";
  validate->add_option("report", report)->required()->check(CLI::ExistingFile);
  validate->add_option("--schema", schema);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario, json_out, csv_out, trace_out, hist_out);
    if (*bytes) return cmd_bytes(p, t, d, precision, strategy, requests);
    if (*hist) return cmd_hist(trace, hist_csv);
    if (*validate) return cmd_validate(report, schema);
    auto f = open_out(out);
    bench::write_prompts(f, bench::generate_prompts(count, lo, hi, seed),
                         std::to_string(count) + " prompts, lengths " + std::to_string(lo) + "-" +
                             std::to_string(hi) + ", uniform byte tokens, seed " + std::to_string(seed));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
