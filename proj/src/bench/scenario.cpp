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
#include <fstream>
#include <sstream>

#include "cecollm/bench/bench.hpp"
#include "cecollm/cloud/server.hpp"
#include "cecollm/codec/half.hpp"
#include "cecollm/model/model_io.hpp"

namespace cecollm::bench {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(v);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw std::invalid_argument("scenario key '" + key + "' expects a number, got '" + v + "'");
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.front() == '-') {
    throw std::invalid_argument("scenario key '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw std::invalid_argument("scenario key '" + key + "' expects true or false");
}

SimTime micros(double us) { return SimTime(static_cast<SimTime::rep>(std::llround(us * 1000.0))); }

std::vector<std::uint32_t> to_layers(const std::string& key, const std::string& v) {
  std::vector<std::uint32_t> out;
  for (const auto& item : split_list(v)) out.push_back(static_cast<std::uint32_t>(to_uint(key, item)));
  return out;
}

}  // namespace

void Scenario::validate() const {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (!std::isfinite(theta) || theta < 0) throw std::invalid_argument("theta must be finite and >= 0");
  if (max_new_tokens < 1) throw std::invalid_argument("max_new_tokens must be >= 1");
  if (prompt_count < 1) throw std::invalid_argument("prompt_count must be >= 1");
  if (prompt_file.empty() && (prompt_min_len < 1 || prompt_min_len > prompt_max_len)) {
    throw std::invalid_argument("need 1 <= prompt_min_len <= prompt_max_len");
  }
  link.validate();
  if (model_file.empty()) model_config.validate();
}

std::vector<Scenario> parse_scenarios(std::istream& in, const std::filesystem::path& base_dir) {
  Scenario s;
  std::vector<edge::Mode> modes{s.mode};
  bool policy_set = false;
  double bw = 100.0, rtt = 20.0, jitter = 0.0;
  std::string line;
  std::size_t lineno = 0;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    if (trim(line).front() == '[') continue;  // section headers are decorative
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string v = trim(std::string_view(line).substr(eq + 1));
    if (key == "name") s.name = v;
    else if (key == "model") s.model_file = path(v);
    else if (key == "model_seed") s.model_seed = to_uint(key, v);
    else if (key == "num_layers") s.model_config.num_layers = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "hidden_dim") s.model_config.hidden_dim = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "num_heads") s.model_config.num_heads = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "ffn_dim") s.model_config.ffn_dim = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "max_seq_len") s.model_config.max_seq_len = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "split_layer") s.model_config.split_layer = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "exit_layers") s.model_config.exit_layers = to_layers(key, v);
    else if (key == "mode" || key == "modes") {
      modes.clear();
      for (const auto& m : split_list(v)) modes.push_back(edge::parse_mode(m));
      if (modes.empty()) throw std::invalid_argument("scenario needs at least one mode");
    }
    else if (key == "theta") s.theta = to_double(key, v);
    else if (key == "wire_precision") s.wire = edge::parse_wire_precision(v);
    else if (key == "upload_policy") { s.upload_policy = edge::parse_upload_policy(v); policy_set = true; }
    else if (key == "bandwidth_mbps") bw = to_double(key, v);
    else if (key == "rtt_ms") rtt = to_double(key, v);
    else if (key == "jitter_ms") jitter = to_double(key, v);
    else if (key == "prompts") s.prompt_file = path(v);
    else if (key == "prompt_count") s.prompt_count = to_uint(key, v);
    else if (key == "prompt_min_len") s.prompt_min_len = to_uint(key, v);
    else if (key == "prompt_max_len") s.prompt_max_len = to_uint(key, v);
    else if (key == "max_new_tokens") s.max_new_tokens = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "repetitions") s.repetitions = static_cast<std::uint32_t>(to_uint(key, v));
    else if (key == "seed") s.seed = to_uint(key, v);
    else if (key == "timing") {
      if (v != "modeled" && v != "measured") throw std::invalid_argument("timing must be modeled or measured");
      s.timing.measured = v == "measured";
    }
    else if (key == "edge_layer_us") s.timing.edge.per_layer_position = micros(to_double(key, v));
    else if (key == "edge_head_us") s.timing.edge.per_head = micros(to_double(key, v));
    else if (key == "cloud_layer_us") s.timing.cloud.per_layer_position = micros(to_double(key, v));
    else if (key == "cloud_head_us") s.timing.cloud.per_head = micros(to_double(key, v));
    else if (key == "oracle") s.oracle = to_bool(key, v);
    else throw std::invalid_argument("scenario line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  s.link = transport::LinkParams::from_cli(bw, rtt, jitter);
  std::vector<Scenario> out;
  for (edge::Mode m : modes) {
    Scenario x = s;
    x.mode = m;
    if (m == edge::Mode::kStandalone) {
      if (policy_set && s.upload_policy != edge::UploadPolicy::kNever) {
        throw std::invalid_argument("standalone mode needs upload_policy = never");
      }
      x.upload_policy = edge::UploadPolicy::kNever;
    }
    x.validate();
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path.string());
  return parse_scenarios(in, path.parent_path());
}

Stat summarize(std::span<const double> xs) {
  Stat s;
  if (xs.empty()) return s;
  double sum = 0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

double disagreement(std::span<const TokenId> got, std::span<const TokenId> oracle) {
  const std::size_t n = std::max(got.size(), oracle.size());
  if (n == 0) return 0.0;
  std::size_t bad = n - std::min(got.size(), oracle.size());
  for (std::size_t i = 0; i < std::min(got.size(), oracle.size()); ++i) bad += got[i] != oracle[i];
  return static_cast<double>(bad) / static_cast<double>(n);
}

double f16_logit_deviation(const model::Model& m, std::uint32_t split_layer, std::span<const TokenId> sequence,
                           std::span<const std::uint32_t> targets) {
  if (targets.empty()) return 0.0;
  const auto& cfg = m.config;
  const std::uint32_t last = *std::max_element(targets.begin(), targets.end());
  if (last >= sequence.size()) throw std::invalid_argument("target beyond the replayed sequence");
  const auto used = sequence.first(last + 1);

  model::KVCache edge_cache(cfg, {0, split_layer});
  auto split = model::forward_layers(m, {0, split_layer}, model::embed(m, used, 0), edge_cache);
  split.layer = split_layer;
  auto rounded = split;
  for (auto& x : rounded.activations) x = codec::decode_f16(codec::encode_f16(x));

  const model::LayerRange cloud{split_layer, cfg.num_layers};
  model::KVCache c32(cfg, cloud), c16(cfg, cloud);
  const auto out32 = model::forward_layers(m, cloud, split, c32);
  const auto out16 = model::forward_layers(m, cloud, rounded, c16);
  double worst = 0.0;
  for (std::uint32_t t : targets) {
    const auto a = model::final_head(m, out32.row(t));
    const auto b = model::final_head(m, out16.row(t));
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::fabs(a.values[i] - b.values[i])));
    }
  }
  return worst;
}

ScenarioOutput run_scenario(const Scenario& sc) {
  sc.validate();
  auto model = std::make_shared<const model::Model>(
      sc.model_file.empty() ? model::generate_model(sc.model_config, sc.model_seed) : model::load_model(sc.model_file));
  std::vector<Prompt> prompts;
  if (sc.prompt_file.empty()) {
    prompts = generate_prompts(sc.prompt_count, sc.prompt_min_len, sc.prompt_max_len, sc.seed);
  } else {
    prompts = load_prompts(sc.prompt_file);
    if (prompts.size() > sc.prompt_count) prompts.resize(sc.prompt_count);
  }
  const auto& cfg = model->config;

  std::vector<std::vector<TokenId>> oracle;
  if (sc.oracle) {
    for (const auto& p : prompts) oracle.push_back(model::greedy_decode_monolithic(*model, p, sc.max_new_tokens));
  }

  edge::EdgeConfig ec;
  ec.mode = sc.mode;
  ec.theta = sc.theta;
  ec.wire_precision = sc.mode == edge::Mode::kNaiveSplit ? codec::WireEncoding::kF32 : sc.wire;
  ec.upload_policy = sc.upload_policy;
  ec.max_new_tokens = sc.max_new_tokens;
  ec.timing = sc.timing;

  ScenarioOutput out;
  MetricsReport& rep = out.report;
  rep.scenario = sc.name;
  rep.strategy = std::string(edge::to_string(sc.mode));
  rep.theta = sc.theta;
  rep.wire = ec.wire_precision == codec::WireEncoding::kF16 ? "f16" : "f32";
  rep.upload_policy = std::string(edge::to_string(sc.upload_policy));
  rep.repetitions = sc.repetitions;
  rep.prompts = prompts.size();
  rep.exit_token_counts.assign(cfg.num_exits(), 0);

  std::vector<double> total, edge_s, cloud_s, comm_s, disagree;
  for (std::uint32_t r = 0; r < sc.repetitions; ++r) {
    std::optional<cloud::CloudServer> server;
    std::optional<cloud::SimCloudHost> host;
    std::shared_ptr<transport::Endpoint> endpoint;
    if (sc.mode != edge::Mode::kStandalone) {
      cloud::ServerConfig scfg;
      scfg.mode = sc.mode == edge::Mode::kCloudOnly ? cloud::ServerMode::kFull : cloud::ServerMode::kPartition;
      scfg.timing = sc.timing;
      server.emplace(model, scfg);
      transport::LinkParams link = sc.link;
      link.jitter_seed = sc.seed * 1000003ULL + r;
      host.emplace(*server, link);
      endpoint = host->client_ptr();
    }
    edge::EdgeClient client(model, ec, endpoint, sc.seed * 7919ULL + r + 1);

    edge::Timeline tl;
    std::uint64_t bytes_up = 0, bytes_down = 0, tokens = 0, requests = 0, bad = 0, compared = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      edge::RunResult res;
      try {
        res = client.run(prompts[i]);
      } catch (const edge::EdgeError&) {
        rep.availability_failures += 1;
        continue;
      } catch (const transport::TransportError&) {
        rep.availability_failures += 1;
        continue;
      }
      tl.total += res.timeline.total;
      tl.edge += res.timeline.edge;
      tl.cloud += res.timeline.cloud;
      tl.comm += res.timeline.comm;
      bytes_up += res.bytes_up;
      bytes_down += res.bytes_down;
      tokens += res.tokens.size();
      requests += res.cloud_requests;
      if (sc.oracle) {
        const std::size_t n = std::max(res.tokens.size(), oracle[i].size());
        bad += static_cast<std::uint64_t>(std::llround(disagreement(res.tokens, oracle[i]) * static_cast<double>(n)));
        compared += n;
      }
      if (r == 0) {
        for (const auto& t : res.trace) {
          if (t.cloud) {
            rep.cloud_token_count += 1;
          } else if (t.exit_index) {
            rep.exit_token_counts[*t.exit_index] += 1;
          }
        }
        if (sc.mode == edge::Mode::kCollaborative && ec.wire_precision == codec::WireEncoding::kF16 && sc.oracle) {
          std::vector<TokenId> seq = prompts[i];
          seq.insert(seq.end(), res.tokens.begin(), res.tokens.end());
          std::vector<std::uint32_t> targets;
          for (const auto& t : res.trace) {
            if (t.cloud) targets.push_back(t.position - 1);
          }
          rep.max_logit_deviation =
              std::max(rep.max_logit_deviation, f16_logit_deviation(*model, client.split_layer(), seq, targets));
        }
        out.traces.push_back({i, std::move(res.trace)});
      }
    }
    if (host) host->finish();
    total.push_back(transport::to_seconds(tl.total));
    edge_s.push_back(transport::to_seconds(tl.edge));
    cloud_s.push_back(transport::to_seconds(tl.cloud));
    comm_s.push_back(transport::to_seconds(tl.comm));
    disagree.push_back(compared ? static_cast<double>(bad) / static_cast<double>(compared) : 0.0);
    if (r == 0) {
      rep.bytes_up = bytes_up;
      rep.bytes_down = bytes_down;
      rep.generated_tokens = tokens;
      rep.cloud_request_count = requests;
      rep.cloud_request_rate =
          tokens ? static_cast<double>(rep.cloud_token_count) / static_cast<double>(tokens) : 0.0;
    }
  }
  rep.total_s = summarize(total);
  rep.edge_s = summarize(edge_s);
  rep.cloud_s = summarize(cloud_s);
  rep.comm_s = summarize(comm_s);
  rep.disagreement_rate = summarize(disagree).mean;
  return out;
}

}  // namespace cecollm::bench
