// Copyright 2026 the embforge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string>
#include <vector>

#include "embforge/model.hpp"
#include "embforge/numerics.hpp"

namespace fixture {

// Small encoder over the words of `texts`.
inline embforge::Model small_model(const std::vector<std::string>& texts, std::uint64_t seed = 1,
                                   int dim = 16, int layers = 1) {
  embforge::EncoderConfig cfg;
  cfg.dim = dim;
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.max_len = 64;
  cfg.mask = embforge::MaskMode::kBidirectional;
  return embforge::init_model(embforge::Tokenizer::build(texts), cfg, seed);
}

// `n` distinct passages of random words from a `vocab`-word alphabet.
inline std::vector<std::string> passages(std::size_t n, int vocab, std::uint64_t seed) {
  embforge::SeededRng rng(seed);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string p = "p" + std::to_string(i);
    for (int k = 0; k < 6; ++k) p += " t" + std::to_string(rng.uniform_index(static_cast<std::uint64_t>(vocab)));
    out.push_back(p);
  }
  return out;
}

}  // namespace fixture
