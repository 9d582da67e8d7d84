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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "embforge/instruction.hpp"
#include "embforge/io.hpp"
#include "embforge/model.hpp"
#include "embforge/numerics.hpp"
#include "embforge/objectives.hpp"
#include "embforge/parallel.hpp"

namespace embforge {

/// One instructed query with its positive passage and hard negatives. For
/// symmetric samples the instruction is also prepended to the passages.
struct TrainingSample {
  std::string instruction;
  std::string query;
  std::string positive;
  std::vector<std::string> hard_negatives;
  bool symmetric = false;

  void validate() const;
  bool operator==(const TrainingSample&) const = default;
};

/// Validates every sample; errors name the offending index.
void validate_samples(std::span<const TrainingSample> samples);

enum class ScoreScale { kContinuous, kBinary };

struct ScoredPair {
  std::string text_a;
  std::string text_b;
  double score = 0;
  ScoreScale scale = ScoreScale::kContinuous;
};

struct LabeledText {
  std::string text;
  std::string label;
  std::string dataset_id;
};

/// Passages with stable indices and no exact duplicates.
class CandidatePool {
 public:
  CandidatePool() = default;
  explicit CandidatePool(std::vector<std::string> passages);

  std::size_t size() const noexcept { return passages_.size(); }
  const std::string& operator[](std::size_t i) const { return passages_[i]; }
  const std::vector<std::string>& passages() const noexcept { return passages_; }

 private:
  std::vector<std::string> passages_;
};

// JSONL records -------------------------------------------------------------

Json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const Json& j);
ScoredPair scored_pair_from_json(const Json& j);
LabeledText labeled_text_from_json(const Json& j);

std::vector<TrainingSample> read_training_jsonl(const std::filesystem::path& path);
std::string training_jsonl(std::span<const TrainingSample> samples);
std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path& path);
std::vector<LabeledText> read_labeled_texts(const std::filesystem::path& path);

// Curation ------------------------------------------------------------------

/// Continuous pairs with score > 4 and binary pairs with score == 1 each emit
/// two samples, one per direction.
std::vector<TrainingSample> process_symmetric(std::span<const ScoredPair> pairs,
                                              std::string_view instruction = "");

/// One sample per item with its label as the positive. Negatives come first
/// from the other labels of the same dataset, then from `global_label_pool`.
/// `instructions` maps dataset_id to the task instruction.
std::vector<TrainingSample> process_asymmetric(
    std::span<const LabeledText> items, std::span<const std::string> global_label_pool, int m,
    SeededRng& rng, const std::map<std::string, std::string>& instructions = {});

/// Query and positive are two distinct texts of one class; negatives are
/// texts of other classes.
std::vector<TrainingSample> example_based_labeling(
    const std::map<std::string, std::vector<std::string>>& groups, int samples_per_class, int m,
    SeededRng& rng, std::string_view instruction = "");

// Mining --------------------------------------------------------------------

struct MiningOptions {
  int window_lo = 50;  // 1-indexed, inclusive
  int window_hi = 100;
  int m = 7;
};

struct MiningReport {
  int window_lo = 0;
  int window_hi = 0;
  std::vector<std::string> warnings;
  /// Per sample, the 1-indexed rank of every mined negative.
  std::vector<std::vector<int>> ranks;
};

/// Indices of `pool_embeddings` rows by descending cosine to `query`, ties
/// broken by lower index.
std::vector<std::size_t> rank_by_similarity(const VecD& query, const MatD& pool_embeddings);

/// Re-mines every sample's negatives: rank the pool against the instructed
/// query, drop the positive, sample `m` uniformly from the rank window.
std::vector<TrainingSample> mine_hard_negatives(const Model& encoder,
                                                std::span<const TrainingSample> samples,
                                                const CandidatePool& pool, const MiningOptions& opts,
                                                SeededRng& rng, MiningReport* report = nullptr);

// Batching ------------------------------------------------------------------

/// Text fed to the encoder for a sample's query / passages.
std::string query_text(const TrainingSample& s);
std::string passage_text(const TrainingSample& s, const std::string& passage);

/// Embeds every sample (rows l2-normalized). All samples must carry the same
/// number of hard negatives.
template <typename Scalar>
EmbeddedBatch<Scalar> assemble_batch(std::span<const TrainingSample> samples,
                                     const BasicModel<Scalar>& model) {
  require(!samples.empty(), ErrorKind::kData, "assemble_batch: empty batch");
  const std::size_t m = samples.front().hard_negatives.size();
  for (const auto& s : samples) {
    require(s.hard_negatives.size() == m, ErrorKind::kData,
            "assemble_batch: ragged hard-negative counts in batch");
  }
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index d = model.params.config.dim;
  EmbeddedBatch<Scalar> b;
  b.queries.resize(n, d);
  b.positives.resize(n, d);
  b.hard_negatives.resize(n * static_cast<Eigen::Index>(m), d);
  b.negatives_per_sample = static_cast<int>(m);
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    const auto r = static_cast<Eigen::Index>(i);
    b.queries.row(r) = l2_normalize(model.encode_text(query_text(s))).transpose();
    b.positives.row(r) = l2_normalize(model.encode_text(passage_text(s, s.positive))).transpose();
    for (std::size_t k = 0; k < m; ++k) {
      b.hard_negatives.row(r * static_cast<Eigen::Index>(m) + static_cast<Eigen::Index>(k)) =
          l2_normalize(model.encode_text(passage_text(s, s.hard_negatives[k]))).transpose();
    }
  });
  return b;
}

}  // namespace embforge
