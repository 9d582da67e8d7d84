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

#include "embforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "embforge/parallel.hpp"

namespace embforge {

void RetrievalTask::validate() const {
  require(!queries.empty(), ErrorKind::kData, "retrieval task: no queries");
  require(instructions.size() == queries.size() && positive_idx.size() == queries.size(),
          ErrorKind::kData, "retrieval task: per-query fields differ in length");
  for (std::size_t i = 0; i < positive_idx.size(); ++i) {
    require(positive_idx[i] >= 0 && static_cast<std::size_t>(positive_idx[i]) < corpus.size(),
            ErrorKind::kData, "retrieval task: query " + std::to_string(i) + " has an invalid positive_idx");
  }
}

RetrievalTask load_retrieval_task(const std::filesystem::path& task_jsonl,
                                  const std::filesystem::path& corpus_txt) {
  RetrievalTask task;
  task.corpus = CandidatePool(read_lines(corpus_txt));
  for (const auto& j : read_jsonl(task_jsonl)) {
    try {
      task.queries.push_back(j.at("query").get<std::string>());
      task.instructions.push_back(j.value("instruction", std::string()));
      task.positive_idx.push_back(j.at("positive_idx").get<int>());
    } catch (const Json::exception& e) {
      raise(ErrorKind::kData, "malformed task record " + j.dump() + ": " + e.what());
    }
  }
  task.validate();
  return task;
}

double EvalRun::recall_at(int k) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] == k) return recall[i];
  }
  return recall_at_k(ranks, k);
}

double EvalRun::mrr_at(int k) const {
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    if (cutoffs[i] == k) return mrr[i];
  }
  return mrr_at_k(ranks, k);
}

namespace {

void check_ranks(std::span<const int> ranks, int k) {
  require(k >= 1, ErrorKind::kConfig, "metric cutoff K must be >= 1");
  require(!ranks.empty(), ErrorKind::kInput, "no ranks to evaluate");
  for (int r : ranks) require(r >= 1, ErrorKind::kInput, "ranks must be >= 1");
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pct_change(double value, double full) {
  if (full == 0.0) return value == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  return (value - full) / full * 100.0;
}

}  // namespace

double recall_at_k(std::span<const int> ranks, int k) {
  check_ranks(ranks, k);
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double mrr_at_k(std::span<const int> ranks, int k) {
  check_ranks(ranks, k);
  double sum = 0;
  for (int r : ranks) {
    if (r <= k) sum += 1.0 / r;
  }
  return sum / static_cast<double>(ranks.size());
}

double spearman(std::span<const double> predicted, std::span<const double> gold) {
  require(predicted.size() == gold.size(), ErrorKind::kDimension, "spearman: lengths differ");
  require(predicted.size() >= 2, ErrorKind::kInput, "spearman: need at least two points");
  const auto a = fractional_ranks(predicted);
  const auto b = fractional_ranks(gold);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  require(va > 0.0 && vb > 0.0, ErrorKind::kDomain, "spearman: undefined for a constant score vector");
  return cov / std::sqrt(va * vb);
}

std::vector<int> rank_positives(const MatD& queries, const MatD& corpus, std::span<const int> positive_idx) {
  require(queries.rows() == static_cast<Eigen::Index>(positive_idx.size()), ErrorKind::kDimension,
          "rank_positives: one positive per query required");
  require(queries.cols() == corpus.cols(), ErrorKind::kDimension, "rank_positives: dimension mismatch");
  MatD c = corpus;
  normalize_rows(c);
  std::vector<int> ranks(positive_idx.size());
  parallel_for(positive_idx.size(), [&](std::size_t i) {
    const VecD q = l2_normalize(queries.row(static_cast<Eigen::Index>(i)).transpose());
    const VecD sims = c * q;
    const Eigen::Index pos = positive_idx[i];
    const double s = sims[pos];
    int rank = 1;
    for (Eigen::Index j = 0; j < sims.size(); ++j) {
      if (sims[j] > s || (sims[j] == s && j < pos)) ++rank;
    }
    ranks[i] = rank;
  });
  return ranks;
}

EmbeddedTask embed_task(const Model& model, const RetrievalTask& task) {
  task.validate();
  const Eigen::Index d = model.params.config.dim;
  EmbeddedTask out{MatD(static_cast<Eigen::Index>(task.queries.size()), d),
                   MatD(static_cast<Eigen::Index>(task.corpus.size()), d)};
  parallel_for(task.queries.size(), [&](std::size_t i) {
    out.queries.row(static_cast<Eigen::Index>(i)) =
        model.encode_instructed(task.instructions[i], task.queries[i]).cast<double>().transpose();
  });
  parallel_for(task.corpus.size(), [&](std::size_t i) {
    out.corpus.row(static_cast<Eigen::Index>(i)) = model.encode_text(task.corpus[i]).cast<double>().transpose();
  });
  return out;
}

EvalRun evaluate_embedded(const EmbeddedTask& emb, std::span<const int> positive_idx, int dim,
                          std::span<const int> cutoffs) {
  const int full = static_cast<int>(emb.queries.cols());
  if (dim == 0) dim = full;
  require(dim >= 1 && dim <= full, ErrorKind::kConfig,
          "evaluation dimension " + std::to_string(dim) + " outside [1," + std::to_string(full) + "]");
  EvalRun run;
  run.dim = dim;
  run.ranks = rank_positives(emb.queries.leftCols(dim), emb.corpus.leftCols(dim), positive_idx);
  run.cutoffs.assign(cutoffs.begin(), cutoffs.end());
  for (int k : cutoffs) {
    run.recall.push_back(recall_at_k(run.ranks, k));
    run.mrr.push_back(mrr_at_k(run.ranks, k));
  }
  return run;
}

namespace {

std::vector<Eigen::Index> top1(const EmbeddedTask& emb) {
  MatD c = emb.corpus;
  normalize_rows(c);
  std::vector<Eigen::Index> out(static_cast<std::size_t>(emb.queries.rows()));
  for (Eigen::Index i = 0; i < emb.queries.rows(); ++i) {
    const VecD sims = c * l2_normalize(emb.queries.row(i).transpose());
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < sims.size(); ++j) {
      if (sims[j] > sims[best]) best = j;
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace

double top1_agreement(const Model& reference, const Model& candidate, const RetrievalTask& task) {
  const auto a = top1(embed_task(reference, task));
  const auto b = top1(embed_task(candidate, task));
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return a.empty() ? 0.0 : static_cast<double>(same) / static_cast<double>(a.size());
}

EvalRun evaluate_retrieval(const Model& model, const RetrievalTask& task, std::span<const int> cutoffs) {
  return evaluate_embedded(embed_task(model, task), task.positive_idx, 0, cutoffs);
}

std::vector<SweepRow> matryoshka_sweep(const Model& model, const RetrievalTask& task,
                                       std::span<const int> dims, std::span<const int> cutoffs) {
  const int full = model.params.config.dim;
  for (int d : dims) {
    require(d >= 1 && d <= full, ErrorKind::kConfig,
            "sweep dimension " + std::to_string(d) + " exceeds model dimension " + std::to_string(full));
  }
  const auto emb = embed_task(model, task);
  const EvalRun reference = evaluate_embedded(emb, task.positive_idx, full, cutoffs);
  std::vector<SweepRow> rows;
  for (int d : dims) {
    SweepRow row;
    row.run = d == full ? reference : evaluate_embedded(emb, task.positive_idx, d, cutoffs);
    for (std::size_t i = 0; i < cutoffs.size(); ++i) {
      row.recall_change_pct.push_back(pct_change(row.run.recall[i], reference.recall[i]));
      row.mrr_change_pct.push_back(pct_change(row.run.mrr[i], reference.mrr[i]));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

double median(std::vector<double> values) {
  require(!values.empty(), ErrorKind::kInput, "median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

MarginRecord margin_from_sims(std::size_t index, double positive_sim, std::vector<double> negative_sims) {
  MarginRecord rec;
  rec.sample_index = index;
  rec.positive_sim = positive_sim;
  rec.negative_min = *std::min_element(negative_sims.begin(), negative_sims.end());
  rec.negative_max = *std::max_element(negative_sims.begin(), negative_sims.end());
  rec.negative_median = median(negative_sims);
  rec.margin = positive_sim - rec.negative_median;
  rec.negative_sims = std::move(negative_sims);
  return rec;
}

std::vector<MarginRecord> margin_report(const Model& model, std::span<const TrainingSample> samples,
                                        std::vector<std::string>* warnings) {
  std::vector<std::optional<MarginRecord>> slots(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    if (s.hard_negatives.empty()) return;
    const Vec<float> q = model.encode_text(query_text(s));
    const double pos = cosine_sim(q, model.encode_text(passage_text(s, s.positive)));
    std::vector<double> negs;
    for (const auto& n : s.hard_negatives) negs.push_back(cosine_sim(q, model.encode_text(passage_text(s, n))));
    slots[i] = margin_from_sims(i, pos, std::move(negs));
  });
  std::vector<MarginRecord> out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) {
      out.push_back(std::move(*slots[i]));
    } else {
      const std::string msg = "sample " + std::to_string(i) + " has no hard negatives; skipped";
      std::cerr << "warning: " << msg << '\n';
      if (warnings) warnings->push_back(msg);
    }
  }
  return out;
}

Json to_json(const EvalRun& run, bool include_ranks) {
  Json j;
  if (!run.model_id.empty()) j["model"] = run.model_id;
  j["dim"] = run.dim;
  Json metrics = Json::object();
  for (std::size_t i = 0; i < run.cutoffs.size(); ++i) {
    metrics["MRR@" + std::to_string(run.cutoffs[i])] = run.mrr[i];
  }
  for (std::size_t i = 0; i < run.cutoffs.size(); ++i) {
    metrics["Recall@" + std::to_string(run.cutoffs[i])] = run.recall[i];
  }
  j["metrics"] = std::move(metrics);
  if (include_ranks) j["ranks"] = run.ranks;
  return j;
}

Json to_json(const SweepRow& row) {
  Json j = to_json(row.run, false);
  Json change = Json::object();
  for (std::size_t i = 0; i < row.run.cutoffs.size(); ++i) {
    change["MRR@" + std::to_string(row.run.cutoffs[i])] = row.mrr_change_pct[i];
  }
  for (std::size_t i = 0; i < row.run.cutoffs.size(); ++i) {
    change["Recall@" + std::to_string(row.run.cutoffs[i])] = row.recall_change_pct[i];
  }
  j["relative_change_pct"] = std::move(change);
  return j;
}

Json to_json(const MarginRecord& rec) {
  Json j;
  j["sample"] = rec.sample_index;
  j["positive_sim"] = rec.positive_sim;
  j["negative_min"] = rec.negative_min;
  j["negative_median"] = rec.negative_median;
  j["negative_max"] = rec.negative_max;
  j["margin"] = rec.margin;
  j["negative_sims"] = rec.negative_sims;
  return j;
}

}  // namespace embforge
