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
#include <optional>

#include "cecollm/bench/bench.hpp"
#include "cecollm/cloud/server.hpp"
#include "cecollm/edge/client.hpp"

using namespace cecollm;

int main(int argc, char** argv) {
  CLI::App app{"Edge half of a split model: early exits locally, offloads the rest"};
  std::string model_file, prompts_file, connect, trace_out, mode = "collaborative", wire = "f16", policy;
  bool sim = false;
  double theta = 0.8, bw = 100, rtt = 20, jitter = 0;
  std::uint32_t max_new = 100;
  std::uint64_t seed = 1;
  app.add_option("--model", model_file)->required()->check(CLI::ExistingFile);
  app.add_option("--prompts", prompts_file)->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode)->check(CLI::IsMember({"standalone", "collaborative", "naive-split", "cloud-only"}));
  app.add_option("--theta", theta);
  app.add_option("--wire-precision", wire)->check(CLI::IsMember({"f16", "f32"}));
  app.add_option("--upload-policy", policy, "always | on-first-offload | never (standalone: never)");
  app.add_option("--max-new-tokens", max_new);
  auto* c = app.add_option("--connect", connect, "host:port of a running server");
  app.add_flag("--sim", sim, "host the server in-process behind a simulated link")->excludes(c);
  app.add_option("--bandwidth-mbps", bw);
  app.add_option("--rtt-ms", rtt);
  app.add_option("--jitter-ms", jitter);
  app.add_option("--seed", seed, "session id and jitter seed");
  app.add_option("--trace-out", trace_out, "per-token trace as JSON lines");
  CLI11_PARSE(app, argc, argv);

  try {
    edge::EdgeConfig cfg;
    cfg.mode = edge::parse_mode(mode);
    cfg.theta = theta;
    cfg.wire_precision = edge::parse_wire_precision(wire);
    cfg.upload_policy = !policy.empty()                   ? edge::parse_upload_policy(policy)
                        : cfg.mode == edge::Mode::kStandalone ? edge::UploadPolicy::kNever
                                                              : edge::UploadPolicy::kAlways;
    cfg.max_new_tokens = max_new;
    auto m = std::make_shared<const model::Model>(model::load_model(model_file));
    const auto prompts = bench::load_prompts(prompts_file);

    std::optional<cloud::CloudServer> server;
    std::optional<cloud::SimCloudHost> host;
    std::shared_ptr<transport::Endpoint> endpoint;
    if (cfg.mode != edge::Mode::kStandalone) {
      if (sim) {
        cloud::ServerConfig sc;
        sc.mode = cfg.mode == edge::Mode::kCloudOnly ? cloud::ServerMode::kFull : cloud::ServerMode::kPartition;
        server.emplace(m, sc);
        auto link = transport::LinkParams::from_cli(bw, rtt, jitter);
        link.jitter_seed = seed;
        host.emplace(*server, link);
        endpoint = host->client_ptr();
      } else if (!connect.empty()) {
        const auto [h, p] = transport::parse_address(connect);
        endpoint = transport::connect_tcp(h, p);
      } else {
        std::cerr << "error: " << mode << " needs --connect <addr> or --sim\n";
        return 2;
      }
    }
    edge::EdgeClient client(m, cfg, endpoint, seed);

    std::vector<bench::PromptTrace> traces;
    int failures = 0;
    std::cout << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      try {
        auto r = client.run(prompts[i]);
        std::cout << "prompt " << i << " tokens:";
        for (auto t : r.tokens) std::cout << ' ' << t;
        std::cout << "\n  requests=" << r.cloud_requests << " rate=" << r.cloud_request_rate()
                  << " bytes_up=" << r.bytes_up << " bytes_down=" << r.bytes_down
                  << " total_s=" << transport::to_seconds(r.timeline.total)
                  << " edge_s=" << transport::to_seconds(r.timeline.edge)
                  << " cloud_s=" << transport::to_seconds(r.timeline.cloud)
                  << " comm_s=" << transport::to_seconds(r.timeline.comm) << '\n';
        traces.push_back({i, std::move(r.trace)});
      } catch (const edge::EdgeError& e) {
        ++failures;
        std::cout << "prompt " << i << " failed: " << e.what() << '\n';
      }
    }
    if (endpoint) endpoint->close();
    if (host) host->finish();
    if (!trace_out.empty()) {
      std::ofstream out(trace_out);
      if (!out) throw std::runtime_error("cannot write " + trace_out);
      bench::write_trace_jsonl(out, traces);
    }
    return failures ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
