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

#include "embforge/toy_corpus.hpp"

#include <cstdio>

namespace embforge {

std::string toy_word(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%03d", index);
  return buf;
}

ToyCorpus make_toy_corpus(const ToyCorpusOptions& o) {
  require(o.clusters >= 2 && o.docs_per_cluster > o.train_docs + 1 && o.train_docs >= 2,
          ErrorKind::kConfig, "toy corpus: bad cluster/doc counts");
  const int topic_total = o.clusters * o.topic_words;
  require(topic_total < o.vocab, ErrorKind::kConfig, "toy corpus: vocab too small for topic words");
  require(o.min_len >= 1 && o.max_len >= o.min_len, ErrorKind::kConfig, "toy corpus: bad lengths");
  const int background = o.vocab - topic_total;

  SeededRng rng(o.seed);
  ToyCorpus out;
  out.docs.resize(static_cast<std::size_t>(o.clusters));
  for (int c = 0; c < o.clusters; ++c) {
    for (int k = 0; k < o.docs_per_cluster; ++k) {
      const int len = o.min_len + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(o.max_len - o.min_len + 1)));
      std::string doc;
      bool has_topic = false;
      for (int t = 0; t < len; ++t) {
        // Force at least one topic word so every document is recoverable.
        const bool topic = rng.uniform() < o.topic_rate || (t == len - 1 && !has_topic);
        int w;
        if (topic) {
          has_topic = true;
          w = c * o.topic_words + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(o.topic_words)));
        } else {
          w = topic_total + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(background)));
        }
        if (t) doc += ' ';
        doc += toy_word(w);
      }
      out.docs[static_cast<std::size_t>(c)].push_back(std::move(doc));
    }
  }

  for (int c = 0; c < o.clusters; ++c) {
    const auto& d = out.docs[static_cast<std::size_t>(c)];
    for (int k = 0; k < o.train_docs; ++k) out.train_pool.push_back(d[static_cast<std::size_t>(k)]);
  }
  for (int c = 0; c < o.clusters; ++c) {
    const auto& d = out.docs[static_cast<std::size_t>(c)];
    for (int p = 0; p < o.pairs_per_cluster; ++p) {
      const auto pick = sample_without_replacement(static_cast<std::size_t>(o.train_docs), 2, rng);
      TrainingSample s;
      s.instruction = o.instruction;
      s.query = d[pick[0]];
      s.positive = d[pick[1]];
      out.train.push_back(std::move(s));
    }
  }
  shuffle(out.train, rng);

  std::vector<std::string> corpus;
  for (int c = 0; c < o.clusters; ++c) {
    const auto& d = out.docs[static_cast<std::size_t>(c)];
    corpus.push_back(d[static_cast<std::size_t>(o.train_docs)]);
    for (int k = o.train_docs + 1; k < o.docs_per_cluster; ++k) {
      out.heldout.instructions.push_back(o.instruction);
      out.heldout.queries.push_back(d[static_cast<std::size_t>(k)]);
      out.heldout.positive_idx.push_back(c);
    }
  }
  out.heldout.corpus = CandidatePool(std::move(corpus));

  std::vector<std::string> texts;
  for (const auto& cl : out.docs) texts.insert(texts.end(), cl.begin(), cl.end());
  texts.push_back(format_query(o.instruction, "x"));
  out.tokenizer = Tokenizer::build(texts);
  return out;
}

}  // namespace embforge
