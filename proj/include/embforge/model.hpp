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

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "embforge/encoder.hpp"
#include "embforge/tokenizer.hpp"

namespace embforge {

/// Tokenizer plus encoder weights: everything needed to embed raw text.
template <typename Scalar>
struct BasicModel {
  Tokenizer tokenizer;
  EncoderParams<Scalar> params;

  TokenSequence tokenize(std::string_view text) const {
    return tokenizer.tokenize(text, static_cast<std::size_t>(params.config.max_len));
  }
  Vec<Scalar> encode_text(std::string_view text) const { return encode(tokenize(text), params); }
  Vec<Scalar> encode_instructed(std::string_view instruction, std::string_view query) const;

  template <typename Other>
  BasicModel<Other> cast() const {
    return BasicModel<Other>{tokenizer, params.template cast<Other>()};
  }
};

using Model = BasicModel<float>;

/// Fresh model over `tokenizer`; `cfg.vocab_size` and `cfg.vocab_hash` are
/// taken from the tokenizer.
Model init_model(Tokenizer tokenizer, EncoderConfig cfg, std::uint64_t seed);

/// Binary container: magic, JSON header (config, vocabulary, tensor table),
/// then little-endian float32 tensors in header order. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);
/// Rejects a checkpoint whose config differs from `expected`.
Model load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected);

}  // namespace embforge

#include "embforge/instruction.hpp"

namespace embforge {

template <typename Scalar>
Vec<Scalar> BasicModel<Scalar>::encode_instructed(std::string_view instruction,
                                                  std::string_view query) const {
  return encode_text(format_query(instruction, query));
}

}  // namespace embforge
