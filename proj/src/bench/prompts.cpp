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

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cecollm/bench/bench.hpp"

namespace cecollm::bench {

std::vector<Prompt> parse_prompts(std::istream& in) {
  std::vector<Prompt> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Prompt p;
    std::string word;
    while (ls >> word) {
      std::size_t used = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(word, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != word.size() || v > 0xFFFFFFFFul) {
        throw std::invalid_argument("prompt line " + std::to_string(lineno) + ": bad token id '" + word + "'");
      }
      p.push_back(static_cast<TokenId>(v));
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prompt> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prompt file " + path.string());
  return parse_prompts(in);
}

void write_prompts(std::ostream& out, const std::vector<Prompt>& prompts, const std::string& header) {
  if (!header.empty()) {
    std::istringstream hs(header);
    std::string line;
    while (std::getline(hs, line)) out << "# " << line << '\n';
  }
  for (const auto& p : prompts) {
    for (std::size_t i = 0; i < p.size(); ++i) out << (i ? " " : "") << p[i];
    out << '\n';
  }
}

// mt19937_64's output sequence is fixed by the standard; the library
// distributions are not, so ranges are mapped by hand.
std::vector<Prompt> generate_prompts(std::size_t count, std::size_t min_len, std::size_t max_len,
                                     std::uint64_t seed) {
  if (min_len == 0 || min_len > max_len) throw std::invalid_argument("need 1 <= min_len <= max_len");
  std::mt19937_64 rng(seed);
  std::vector<Prompt> out(count);
  for (auto& p : out) {
    p.resize(min_len + rng() % (max_len - min_len + 1));
    for (auto& t : p) t = static_cast<TokenId>(rng() % 256);
  }
  return out;
}

}  // namespace cecollm::bench
