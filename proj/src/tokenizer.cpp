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

#include "embforge/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "embforge/error.hpp"

namespace embforge {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

Tokenizer::Tokenizer() : Tokenizer(std::vector<std::string>{}) {}

Tokenizer::Tokenizer(std::vector<std::string> words) {
  vocab_.reserve(words.size() + 2);
  vocab_.emplace_back(kPadToken);
  vocab_.emplace_back(kUnkToken);
  for (auto& w : words) vocab_.push_back(std::move(w));
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    const bool inserted = index_.emplace(vocab_[i], static_cast<TokenId>(i)).second;
    require(inserted, ErrorKind::kInput, "Tokenizer: duplicate vocabulary entry '" + vocab_[i] + "'");
  }
}

Tokenizer Tokenizer::build(std::span<const std::string> texts, std::size_t max_words) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) ++counts[std::move(w)];
  }
  counts.erase(std::string(kPadToken));
  counts.erase(std::string(kUnkToken));
  std::vector<std::pair<std::string, std::size_t>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (max_words > 0 && sorted.size() > max_words) sorted.resize(max_words);
  std::vector<std::string> words;
  words.reserve(sorted.size());
  for (auto& [w, _] : sorted) words.push_back(w);
  return Tokenizer(std::move(words));
}

TokenSequence Tokenizer::tokenize(std::string_view text, std::size_t max_len) const {
  require(max_len >= 1, ErrorKind::kConfig, "tokenize: max_len must be >= 1");
  auto words = split_words(text);
  require(!words.empty(), ErrorKind::kInput, "tokenize: empty text");
  if (words.size() > max_len) words.resize(max_len);
  TokenSequence seq;
  seq.ids.reserve(words.size());
  for (const auto& w : words) seq.ids.push_back(id(w));
  return seq;
}

TokenId Tokenizer::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

std::uint64_t Tokenizer::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& w : vocab_) {
    for (char c : w) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // separator
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace embforge
