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
#include <span>
#include <string>
#include <vector>

#include "embforge/data.hpp"
#include "embforge/io.hpp"
#include "embforge/model.hpp"

namespace embforge {

/// Queries against a corpus with exactly one relevant passage per query.
struct RetrievalTask {
  std::vector<std::string> instructions;  // per query, may be empty
  std::vector<std::string> queries;
  CandidatePool corpus;
  std::vector<int> positive_idx;

  void validate() const;
};

/// Task JSONL ({"query", "instruction", "positive_idx"}) plus a line-per-passage corpus.
RetrievalTask load_retrieval_task(const std::filesystem::path& task_jsonl,
                                  const std::filesystem::path& corpus_txt);

inline const std::vector<int> kDefaultCutoffs{1, 5, 10};

/// Ranked-retrieval outcome for one model at one embedding size.
struct EvalRun {
  std::string model_id;
  int dim = 0;
  std::vector<int> ranks;  // 1-indexed rank of each query's positive
  std::vector<int> cutoffs;
  std::vector<double> recall;  // aligned with cutoffs
  std::vector<double> mrr;

  double recall_at(int k) const;
  double mrr_at(int k) const;
};

/// Fraction of ranks <= k.
double recall_at_k(std::span<const int> ranks, int k);
/// Mean of 1/rank over ranks <= k, zero otherwise.
double mrr_at_k(std::span<const int> ranks, int k);
/// Pearson correlation of average (fractional) ranks.
double spearman(std::span<const double> predicted, std::span<const double> gold);

/// Rank of each query's positive among all corpus rows by cosine similarity.
/// Ties go to the lower corpus index.
std::vector<int> rank_positives(const MatD& queries, const MatD& corpus, std::span<const int> positive_idx);

/// Full-dimension embeddings of a task's queries and corpus.
struct EmbeddedTask {
  MatD queries;
  MatD corpus;
};
EmbeddedTask embed_task(const Model& model, const RetrievalTask& task);

/// Metrics on the first `dim` coordinates (re-normalized); dim 0 means all.
EvalRun evaluate_embedded(const EmbeddedTask& emb, std::span<const int> positive_idx, int dim = 0,
                          std::span<const int> cutoffs = kDefaultCutoffs);
EvalRun evaluate_retrieval(const Model& model, const RetrievalTask& task,
                           std::span<const int> cutoffs = kDefaultCutoffs);

/// Fraction of queries whose top-1 corpus passage is the same under both
/// models (ties to the lower index).
double top1_agreement(const Model& reference, const Model& candidate, const RetrievalTask& task);

struct SweepRow {
  EvalRun run;
  /// (metric_dim - metric_full) / metric_full * 100, aligned with cutoffs.
  std::vector<double> recall_change_pct;
  std::vector<double> mrr_change_pct;
};

/// Evaluates each prefix size in `dims` against the full dimension.
std::vector<SweepRow> matryoshka_sweep(const Model& model, const RetrievalTask& task,
                                       std::span<const int> dims,
                                       std::span<const int> cutoffs = kDefaultCutoffs);

struct MarginRecord {
  std::size_t sample_index = 0;
  double positive_sim = 0;
  double negative_min = 0;
  double negative_median = 0;
  double negative_max = 0;
  double margin = 0;  // positive_sim - negative_median
  std::vector<double> negative_sims;
};

/// Median of an unsorted list (mean of the middle pair for even sizes).
double median(std::vector<double> values);

MarginRecord margin_from_sims(std::size_t index, double positive_sim, std::vector<double> negative_sims);

/// Positive-vs-negative similarity statistics per sample. Samples without
/// hard negatives are skipped and reported in `warnings`.
std::vector<MarginRecord> margin_report(const Model& model, std::span<const TrainingSample> samples,
                                        std::vector<std::string>* warnings = nullptr);

Json to_json(const EvalRun& run, bool include_ranks = true);
Json to_json(const SweepRow& row);
Json to_json(const MarginRecord& rec);

}  // namespace embforge
