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

#include <csignal>
#include <iostream>
#include <unistd.h>

#include "cecollm/cloud/server.hpp"

using namespace cecollm;

namespace {
transport::TcpListener* g_listener = nullptr;
void on_signal(int) {
  if (g_listener) g_listener->close();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cloud half of a split model: holds layers [k, L) or the full model"};
  std::string model_file, mode = "partition", listen;
  bool stdio = false;
  double ttl_s = 300, sweep_s = 30, context_timeout_ms = 10000;
  cloud::ServerConfig cfg;
  app.add_option("--model", model_file)->required()->check(CLI::ExistingFile);
  app.add_option("--mode", mode)->check(CLI::IsMember({"full", "partition"}));
  app.add_option("--split-layer", cfg.split_layer, "0 uses the model file's value");
  auto* l = app.add_option("--listen", listen, "host:port; port 0 picks one");
  app.add_flag("--sim", stdio, "serve one connection over stdin/stdout instead of TCP")->excludes(l);
  app.add_option("--ttl-s", ttl_s);
  app.add_option("--sweep-s", sweep_s);
  app.add_option("--context-timeout-ms", context_timeout_ms);
  CLI11_PARSE(app, argc, argv);
  if (listen.empty() && !stdio) {
    std::cerr << "error: give --listen <addr> or --sim\n";
    return 2;
  }
  try {
    cfg.mode = mode == "full" ? cloud::ServerMode::kFull : cloud::ServerMode::kPartition;
    cfg.eviction.ttl = transport::from_seconds(ttl_s);
    cfg.eviction.sweep_interval = transport::from_seconds(sweep_s);
    cfg.context_timeout = transport::from_seconds(context_timeout_ms / 1000.0);
    cfg.context_wait_real = std::chrono::milliseconds(static_cast<long>(context_timeout_ms));
    auto m = std::make_shared<const model::Model>(model::load_model(model_file));
    cloud::CloudServer server(m, cfg);
    if (stdio) {
      transport::StreamEndpoint ep(STDIN_FILENO, STDOUT_FILENO, transport::Direction::kDown);
      serve_connection(server, ep);
      return 0;
    }
    const auto [host, port] = transport::parse_address(listen);
    transport::TcpListener listener(host, port);
    g_listener = &listener;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on " << host << ':' << listener.port() << " mode=" << mode
              << " split=" << server.split_layer() << std::endl;
    serve_tcp(server, listener);
    g_listener = nullptr;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
