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

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace embforge {

using TokenId = std::int32_t;

inline constexpr std::size_t kDefaultMaxLen = 512;

struct TokenSequence {
  std::vector<TokenId> ids;
};

/// Lowercases and splits on whitespace; every ASCII punctuation character
/// becomes its own token.
std::vector<std::string> split_words(std::string_view text);

/// Word-level vocabulary. Id 0 is the pad token and id 1 the unknown token.
class Tokenizer {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kUnkId = 1;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kUnkToken = "[UNK]";

  Tokenizer();
  /// `words` excludes the two special tokens; duplicates are rejected.
  explicit Tokenizer(std::vector<std::string> words);

  /// Vocabulary ordered by descending frequency, ties broken lexicographically.
  /// `max_words` of 0 keeps every word.
  static Tokenizer build(std::span<const std::string> texts, std::size_t max_words = 0);

  TokenSequence tokenize(std::string_view text, std::size_t max_len = kDefaultMaxLen) const;

  TokenId id(std::string_view word) const;
  std::size_t size() const noexcept { return vocab_.size(); }
  TokenId pad_id() const noexcept { return kPadId; }
  TokenId unk_id() const noexcept { return kUnkId; }
  /// Full vocabulary including the special tokens, indexed by id.
  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  /// FNV-1a over the vocabulary in id order.
  std::uint64_t hash() const;

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace embforge
