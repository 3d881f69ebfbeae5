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

#include <cstdio>
#include <iostream>

#include "cecollm/model/model_io.hpp"

using namespace cecollm;

int main(int argc, char** argv) {
  CLI::App app{"Generate and inspect toy model files"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a seeded model file");
  model::ModelConfig cfg = model::desk_config();
  std::uint64_t seed = 1;
  std::string out;
  model::GenerateOptions opts;
  gen->add_option("--seed", seed, "weight seed");
  gen->add_option("--out", out, "output path")->required();
  gen->add_option("--layers", cfg.num_layers);
  gen->add_option("--hidden", cfg.hidden_dim);
  gen->add_option("--heads", cfg.num_heads);
  gen->add_option("--ffn", cfg.ffn_dim);
  gen->add_option("--vocab", cfg.vocab_size);
  gen->add_option("--max-seq", cfg.max_seq_len);
  gen->add_option("--split-layer", cfg.split_layer);
  gen->add_option("--exits", cfg.exit_layers, "exit layers, ascending")->delimiter(',');
  gen->add_option("--head-norm-gain", opts.head_norm_gain);

  auto* info = app.add_subcommand("info", "print a model file's config and hash");
  std::string in;
  info->add_option("file", in)->required()->check(CLI::ExistingFile);

  auto* logits = app.add_subcommand("logits", "print head logits at the last position of a token sequence");
  std::string lfile, head = "final";
  std::vector<model::TokenId> tokens;
  logits->add_option("--model", lfile)->required()->check(CLI::ExistingFile);
  logits->add_option("--tokens", tokens)->required()->delimiter(',');
  logits->add_option("--head", head, "final, or an exit index");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) {
      auto m = model::generate_model(cfg, seed, opts);
      model::save_model(m, out);
      std::cout << "wrote " << out << " (" << model::describe(m.config) << ")\n";
    } else if (*logits) {
      auto m = model::load_model(lfile);
      const auto& c = m.config;
      const bool final = head == "final";
      const std::uint32_t depth = final ? c.num_layers : c.exit_layers.at(std::stoul(head));
      model::KVCache cache(c, {0, depth});
      auto out = model::forward_layers(m, {0, depth}, model::embed(m, tokens, 0), cache);
      const auto row = out.row(out.num_positions() - 1);
      const auto l = final ? model::final_head(m, row) : model::exit_head(m, std::stoul(head), row);
      std::cout.precision(9);
      for (float v : l.values) std::cout << v << '\n';
    } else {
      auto m = model::load_model(in);
      const auto h = model::model_hash(m);
      std::cout << model::describe(m.config) << "\nweights " << model::weight_count(m) << " (backbone "
                << model::backbone_weight_count(m) << ")\nsha256 ";
      for (auto b : h) std::printf("%02x", b);
      std::cout << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
