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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cecollm/codec/message.hpp"
#include "cecollm/edge/client.hpp"
#include "cecollm/model/model.hpp"
#include "cecollm/transport/transport.hpp"

namespace cecollm::bench {

using model::TokenId;
using Prompt = std::vector<TokenId>;

// ---- prompt sets ----------------------------------------------------------

// One prompt per line as whitespace-separated token ids; lines starting with
// '#' and blank lines are skipped.
std::vector<Prompt> parse_prompts(std::istream& in);
std::vector<Prompt> load_prompts(const std::filesystem::path& path);
void write_prompts(std::ostream& out, const std::vector<Prompt>& prompts, const std::string& header = "");
// Uniform byte tokens with lengths uniform in [min_len, max_len].
std::vector<Prompt> generate_prompts(std::size_t count, std::size_t min_len, std::size_t max_len,
                                     std::uint64_t seed);

// ---- analytic byte model --------------------------------------------------

enum class Strategy { kNaive, kCeCollm, kCloudOnly };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

struct ByteCount {
  std::uint64_t payload_up = 0;  // activation bytes only
  std::uint64_t framed_up = 0;   // every uplink frame, headers included
  std::uint64_t framed_down = 0;
  std::uint64_t framed_total() const { return framed_up + framed_down; }
};

// Bytes one prompt moves. naive: per token a fresh session carrying the
// f32 prefix; ce-collm: each position uploaded once at `precision`, one
// request per offloaded token (`cloud_requests`, defaulting to every token);
// cloud-only: prompt ids up, one streamed response per token. Throws
// std::invalid_argument for zero prompt or hidden sizes and
// std::overflow_error if a count leaves u64.
ByteCount analytic_bytes(std::uint64_t prompt_len, std::uint64_t new_tokens, std::uint64_t hidden_dim,
                         codec::WireEncoding precision, Strategy strategy,
                         std::optional<std::uint64_t> cloud_requests = std::nullopt);

// ---- traces and histograms ------------------------------------------------

struct PromptTrace {
  std::size_t prompt_index = 0;
  std::vector<edge::TokenTrace> tokens;
};

void write_trace_jsonl(std::ostream& out, const std::vector<PromptTrace>& traces);
std::vector<PromptTrace> read_trace_jsonl(std::istream& in);

inline constexpr std::size_t kHistogramBins = 20;

struct ExitHistogram {
  std::size_t exit_index = 0;
  std::array<std::uint64_t, kHistogramBins> bins{};
  std::uint64_t count = 0;
  double p25 = 0.0, p50 = 0.0, p75 = 0.0;
  double fraction_at_least(double c) const;  // from the raw values, not the bins
  std::vector<double> values;
};

// Linear interpolation between closest ranks.
double quantile(std::vector<double> values, double q);

// One histogram per exit that has at least one evaluation. Throws
// std::invalid_argument when no exit was ever evaluated.
std::vector<ExitHistogram> confidence_histogram(const std::vector<PromptTrace>& traces);
// One row per exit: count, quartiles, share at or above 0.8, then the bin
// counts. Bin b covers [b/20, (b+1)/20); the last bin also takes 1.0.
void write_histogram_csv(std::ostream& out, const std::vector<ExitHistogram>& hists);

// ---- scenarios ------------------------------------------------------------

struct Scenario {
  std::string name = "scenario";
  std::filesystem::path model_file;        // empty: generate from model_seed
  std::uint64_t model_seed = 1;
  model::ModelConfig model_config = model::desk_config();  // used when generating
  edge::Mode mode = edge::Mode::kCollaborative;
  double theta = 0.8;
  codec::WireEncoding wire = codec::WireEncoding::kF16;
  edge::UploadPolicy upload_policy = edge::UploadPolicy::kAlways;
  transport::LinkParams link;
  std::filesystem::path prompt_file;       // empty: generate
  std::size_t prompt_count = 10;           // generated count, or cap on the file's prompts
  std::size_t prompt_min_len = 13;
  std::size_t prompt_max_len = 43;
  std::uint32_t max_new_tokens = 100;
  std::uint32_t repetitions = 5;
  std::uint64_t seed = 1;
  ComputeTiming timing;
  bool oracle = true;  // compare against monolithic decode

  void validate() const;
};

// key = value lines, '#' comments. `mode` may list several modes separated by
// commas; each becomes its own scenario. Relative paths resolve against
// base_dir.
std::vector<Scenario> parse_scenarios(std::istream& in, const std::filesystem::path& base_dir = {});
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

// ---- reports --------------------------------------------------------------

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};
Stat summarize(std::span<const double> xs);

struct MetricsReport {
  std::string scenario;
  std::string strategy;
  double theta = 0.0;
  std::string wire;
  std::string upload_policy;
  std::uint32_t repetitions = 0;
  std::uint64_t prompts = 0;
  Stat total_s, cloud_s, edge_s, comm_s;
  std::uint64_t bytes_up = 0;   // per repetition
  std::uint64_t bytes_down = 0;
  std::uint64_t generated_tokens = 0;  // per repetition
  std::uint64_t cloud_request_count = 0;
  double cloud_request_rate = 0.0;  // cloud-produced tokens / generated tokens
  // Tokens decided at each exit, then tokens the cloud produced.
  std::vector<std::uint64_t> exit_token_counts;
  std::uint64_t cloud_token_count = 0;
  double disagreement_rate = 0.0;
  double max_logit_deviation = 0.0;  // f16 vs f32 wire at offloaded positions
  std::uint64_t availability_failures = 0;
};

struct ScenarioOutput {
  MetricsReport report;
  std::vector<PromptTrace> traces;  // first repetition
};

// Runs every repetition against a fresh server and simulated link.
ScenarioOutput run_scenario(const Scenario& scenario);

// Token-level disagreement: mismatched or missing positions over the longer
// of the two sequences.
double disagreement(std::span<const TokenId> got, std::span<const TokenId> oracle);

// Largest |logit| difference at the given target positions between cloud
// logits computed from f32 and from f16-rounded split activations, replaying
// prompt + generated tokens.
double f16_logit_deviation(const model::Model& model, std::uint32_t split_layer,
                           std::span<const TokenId> sequence, std::span<const std::uint32_t> targets);

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "strategy", "theta",      "total_s_mean",   "total_s_std",      "cloud_s",          "edge_s",
      "comm_s",   "bytes_up",   "bytes_down",     "cloud_req_rate",   "disagreement_rate"};
  return cols;
}

nlohmann::json to_json(const std::vector<MetricsReport>& reports);
std::vector<MetricsReport> reports_from_json(const nlohmann::json& j);
void write_csv(std::ostream& out, const std::vector<MetricsReport>& reports);
// Restores the CSV columns only.
std::vector<MetricsReport> read_csv(std::istream& in);

enum class ReportFormat { kCsv, kJson };
// Throws std::runtime_error when the file cannot be written.
void export_report(const std::vector<MetricsReport>& reports, ReportFormat format,
                   const std::filesystem::path& path);

// Validates against the subset of JSON Schema the report schema uses: type,
// properties, required, additionalProperties, items, enum, minimum, maximum,
// minItems, const and local $ref. Returns one message per violation.
std::vector<std::string> validate_schema(const nlohmann::json& doc, const nlohmann::json& schema);

}  // namespace cecollm::bench
