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
#include <string>
#include <vector>

#include "embforge/data.hpp"
#include "embforge/evaluation.hpp"
#include "embforge/tokenizer.hpp"

namespace embforge {

/// Synthetic clustered corpus: each cluster owns a disjoint set of topic words
/// and every document mixes a few topic words into shared background words.
struct ToyCorpusOptions {
  int clusters = 32;
  int docs_per_cluster = 20;
  int vocab = 500;
  int topic_words = 6;
  int train_docs = 14;  // per cluster; the rest are held out
  int min_len = 10;
  int max_len = 16;
  double topic_rate = 0.4;
  int pairs_per_cluster = 60;
  std::string instruction = "retrieve a document on the same topic";
  std::uint64_t seed = 7;
};

struct ToyCorpus {
  std::vector<std::vector<std::string>> docs;  // [cluster][doc]
  /// Same-cluster (query, positive) pairs over training documents.
  std::vector<TrainingSample> train;
  /// Every training document, usable as a mining pool.
  std::vector<std::string> train_pool;
  /// One corpus passage per cluster; the remaining held-out docs are queries.
  RetrievalTask heldout;
  Tokenizer tokenizer;
};

std::string toy_word(int index);
ToyCorpus make_toy_corpus(const ToyCorpusOptions& opts = {});

}  // namespace embforge
