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

#include "embforge/data.hpp"

#include <algorithm>
#include <iostream>
#include <set>
#include <unordered_set>

namespace embforge {

void TrainingSample::validate() const {
  require(query.find_first_not_of(" \t\r\n") != std::string::npos, ErrorKind::kData,
          "training sample has an empty query");
  require(positive.find_first_not_of(" \t\r\n") != std::string::npos, ErrorKind::kData,
          "training sample has an empty positive");
  require(std::find(hard_negatives.begin(), hard_negatives.end(), positive) == hard_negatives.end(),
          ErrorKind::kData, "training sample lists its positive among its hard negatives");
}

void validate_samples(std::span<const TrainingSample> samples) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      samples[i].validate();
    } catch (const Error& e) {
      raise(e.kind(), "sample " + std::to_string(i) + ": " + e.what());
    }
  }
}

CandidatePool::CandidatePool(std::vector<std::string> passages) : passages_(std::move(passages)) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    require(seen.insert(passages_[i]).second, ErrorKind::kData,
            "candidate pool: duplicate passage at index " + std::to_string(i));
  }
}

// JSONL ----------------------------------------------------------------------

Json to_json(const TrainingSample& s) {
  Json j;
  j["instruction"] = s.instruction;
  j["query"] = s.query;
  j["pos"] = s.positive;
  j["negs"] = s.hard_negatives;
  j["symmetric"] = s.symmetric;
  return j;
}

namespace {

template <typename Fn>
auto parse_record(const Json& j, const char* kind, Fn&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    raise(ErrorKind::kData, std::string("malformed ") + kind + " record " + j.dump() + ": " + e.what());
  }
}

}  // namespace

TrainingSample sample_from_json(const Json& j) {
  return parse_record(j, "training", [&] {
    TrainingSample s;
    s.instruction = j.value("instruction", std::string());
    s.query = j.at("query").get<std::string>();
    s.positive = j.at("pos").get<std::string>();
    if (j.contains("negs")) s.hard_negatives = j.at("negs").get<std::vector<std::string>>();
    s.symmetric = j.value("symmetric", false);
    return s;
  });
}

ScoredPair scored_pair_from_json(const Json& j) {
  return parse_record(j, "scored pair", [&] {
    ScoredPair p;
    p.text_a = j.at("text_a").get<std::string>();
    p.text_b = j.at("text_b").get<std::string>();
    p.score = j.at("score").get<double>();
    const auto scale = j.at("scale").get<std::string>();
    if (scale == "continuous") {
      p.scale = ScoreScale::kContinuous;
    } else if (scale == "binary") {
      p.scale = ScoreScale::kBinary;
    } else {
      raise(ErrorKind::kData, "unknown score scale '" + scale + "'");
    }
    return p;
  });
}

LabeledText labeled_text_from_json(const Json& j) {
  return parse_record(j, "labeled", [&] {
    LabeledText t{j.at("text").get<std::string>(), j.at("label").get<std::string>(),
                  j.at("dataset_id").get<std::string>()};
    require(!t.label.empty(), ErrorKind::kData, "labeled text with empty label");
    return t;
  });
}

std::vector<TrainingSample> read_training_jsonl(const std::filesystem::path& path) {
  std::vector<TrainingSample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(sample_from_json(j));
  validate_samples(out);
  return out;
}

std::string training_jsonl(std::span<const TrainingSample> samples) {
  std::string out;
  for (const auto& s : samples) {
    out += to_json(s).dump();
    out += '\n';
  }
  return out;
}

std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path& path) {
  std::vector<ScoredPair> out;
  for (const auto& j : read_jsonl(path)) out.push_back(scored_pair_from_json(j));
  return out;
}

std::vector<LabeledText> read_labeled_texts(const std::filesystem::path& path) {
  std::vector<LabeledText> out;
  for (const auto& j : read_jsonl(path)) out.push_back(labeled_text_from_json(j));
  return out;
}

// Curation -------------------------------------------------------------------

std::vector<TrainingSample> process_symmetric(std::span<const ScoredPair> pairs,
                                              std::string_view instruction) {
  require(!pairs.empty(), ErrorKind::kData, "process_symmetric: no pairs");
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    bool keep = false;
    if (p.scale == ScoreScale::kContinuous) {
      require(p.score >= 0.0 && p.score <= 5.0, ErrorKind::kData,
              "pair " + std::to_string(i) + ": continuous score outside [0,5]");
      keep = p.score > 4.0;
    } else {
      require(p.score == 0.0 || p.score == 1.0, ErrorKind::kData,
              "pair " + std::to_string(i) + ": binary score must be 0 or 1");
      keep = p.score == 1.0;
    }
    if (!keep) continue;
    out.push_back({std::string(instruction), p.text_a, p.text_b, {}, true});
    out.push_back({std::string(instruction), p.text_b, p.text_a, {}, true});
  }
  return out;
}

std::vector<TrainingSample> process_asymmetric(std::span<const LabeledText> items,
                                               std::span<const std::string> global_label_pool, int m,
                                               SeededRng& rng,
                                               const std::map<std::string, std::string>& instructions) {
  require(m >= 1, ErrorKind::kConfig, "process_asymmetric: M must be >= 1");
  std::map<std::string, std::set<std::string>> labels_by_dataset;
  for (const auto& it : items) {
    require(!it.label.empty(), ErrorKind::kData, "process_asymmetric: empty label");
    labels_by_dataset[it.dataset_id].insert(it.label);
  }
  std::vector<std::string> global;
  {
    std::unordered_set<std::string> seen;
    for (const auto& l : global_label_pool) {
      if (seen.insert(l).second) global.push_back(l);
    }
  }

  const auto want = static_cast<std::size_t>(m);
  std::vector<TrainingSample> out;
  out.reserve(items.size());
  for (const auto& it : items) {
    const auto& labels = labels_by_dataset[it.dataset_id];
    std::vector<std::string> others;
    for (const auto& l : labels) {
      if (l != it.label) others.push_back(l);
    }
    std::vector<std::string> negs;
    if (others.size() >= want) {
      for (auto idx : sample_without_replacement(others.size(), want, rng)) negs.push_back(others[idx]);
    } else {
      negs = others;
      std::vector<std::string> extra;
      for (const auto& l : global) {
        if (l != it.label && std::find(negs.begin(), negs.end(), l) == negs.end()) extra.push_back(l);
      }
      const std::size_t need = want - negs.size();
      require(extra.size() >= need, ErrorKind::kData,
              "process_asymmetric: dataset '" + it.dataset_id + "' needs " + std::to_string(need) +
                  " more labels than the global pool provides");
      for (auto idx : sample_without_replacement(extra.size(), need, rng)) negs.push_back(extra[idx]);
    }
    auto inst = instructions.find(it.dataset_id);
    out.push_back({inst == instructions.end() ? std::string() : inst->second, it.text, it.label,
                   std::move(negs), false});
  }
  return out;
}

std::vector<TrainingSample> example_based_labeling(
    const std::map<std::string, std::vector<std::string>>& groups, int samples_per_class, int m,
    SeededRng& rng, std::string_view instruction) {
  require(groups.size() >= 2, ErrorKind::kData, "example_based_labeling: need at least two classes");
  require(samples_per_class >= 1 && m >= 0, ErrorKind::kConfig,
          "example_based_labeling: invalid sample counts");
  std::map<std::string, std::vector<std::string>> distinct;
  for (const auto& [label, texts] : groups) {
    std::vector<std::string> uniq;
    std::unordered_set<std::string> seen;
    for (const auto& t : texts) {
      if (seen.insert(t).second) uniq.push_back(t);
    }
    distinct[label] = std::move(uniq);
  }

  std::vector<TrainingSample> out;
  for (const auto& [label, texts] : distinct) {
    if (texts.size() < 2) continue;
    std::vector<const std::string*> foreign;
    for (const auto& [other, other_texts] : distinct) {
      if (other == label) continue;
      for (const auto& t : other_texts) foreign.push_back(&t);
    }
    for (int s = 0; s < samples_per_class; ++s) {
      const auto pair = sample_without_replacement(texts.size(), 2, rng);
      const std::string& query = texts[pair[0]];
      const std::string& positive = texts[pair[1]];
      std::vector<const std::string*> eligible;
      for (const auto* t : foreign) {
        if (*t != query && *t != positive) eligible.push_back(t);
      }
      require(eligible.size() >= static_cast<std::size_t>(m), ErrorKind::kData,
              "example_based_labeling: not enough other-class texts for class '" + label + "'");
      std::vector<std::string> negs;
      for (auto idx : sample_without_replacement(eligible.size(), static_cast<std::size_t>(m), rng)) {
        negs.push_back(*eligible[idx]);
      }
      out.push_back({std::string(instruction), query, positive, std::move(negs), true});
    }
  }
  require(!out.empty(), ErrorKind::kData, "example_based_labeling: no class has two distinct texts");
  return out;
}

// Mining ---------------------------------------------------------------------

std::vector<std::size_t> rank_by_similarity(const VecD& query, const MatD& pool_embeddings) {
  const VecD qn = l2_normalize(query);
  VecD sims(pool_embeddings.rows());
  for (Eigen::Index r = 0; r < pool_embeddings.rows(); ++r) {
    sims[r] = qn.dot(pool_embeddings.row(r).transpose()) / pool_embeddings.row(r).norm();
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(pool_embeddings.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sims[static_cast<Eigen::Index>(a)] > sims[static_cast<Eigen::Index>(b)];
  });
  return order;
}

std::string query_text(const TrainingSample& s) { return format_query(s.instruction, s.query); }

std::string passage_text(const TrainingSample& s, const std::string& passage) {
  return s.symmetric ? format_query(s.instruction, passage) : passage;
}

std::vector<TrainingSample> mine_hard_negatives(const Model& encoder,
                                                std::span<const TrainingSample> samples,
                                                const CandidatePool& pool, const MiningOptions& opts,
                                                SeededRng& rng, MiningReport* report) {
  require(opts.window_lo >= 1 && opts.window_lo <= opts.window_hi, ErrorKind::kConfig,
          "mining: window must satisfy 1 <= lo <= hi");
  require(opts.m >= 1, ErrorKind::kConfig, "mining: M must be >= 1");
  require(pool.size() >= 1, ErrorKind::kData, "mining: empty candidate pool");
  int lo = opts.window_lo, hi = opts.window_hi;
  std::vector<std::string> warnings;
  const int pool_size = static_cast<int>(pool.size());
  if (pool_size < hi) {
    lo = std::max(1, std::min(lo, pool_size / 2));
    hi = pool_size;
    warnings.push_back("candidate pool has " + std::to_string(pool_size) + " passages (< " +
                       std::to_string(opts.window_hi) + "); mining window shrunk to [" +
                       std::to_string(lo) + "," + std::to_string(hi) + "]");
    std::cerr << "warning: " << warnings.back() << '\n';
  }

  // Pool embeddings, one matrix per distinct passage prefix.
  std::map<std::string, MatD> pool_emb;
  for (const auto& s : samples) pool_emb.emplace(s.symmetric ? s.instruction : std::string(), MatD());
  for (auto& [inst, emb] : pool_emb) {
    emb.resize(pool_size, encoder.params.config.dim);
    parallel_for(pool.size(), [&](std::size_t i) {
      const std::string text = inst.empty() ? pool[i] : format_query(inst, pool[i]);
      emb.row(static_cast<Eigen::Index>(i)) = encoder.encode_text(text).cast<double>().transpose();
    });
  }

  const std::uint64_t base = rng.next_u64();
  std::vector<TrainingSample> out(samples.begin(), samples.end());
  std::vector<std::vector<int>> ranks(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    const MatD& emb = pool_emb.at(s.symmetric ? s.instruction : std::string());
    const VecD q = encoder.encode_text(query_text(s)).cast<double>();
    const auto order = rank_by_similarity(q, emb);
    std::vector<int> eligible;  // 1-indexed ranks inside the window
    for (int r = lo; r <= hi; ++r) {
      if (pool[order[static_cast<std::size_t>(r - 1)]] != s.positive) eligible.push_back(r);
    }
    require(eligible.size() >= static_cast<std::size_t>(opts.m), ErrorKind::kData,
            "mining: window [" + std::to_string(lo) + "," + std::to_string(hi) + "] holds only " +
                std::to_string(eligible.size()) + " candidates for M=" + std::to_string(opts.m));
    SeededRng local = SeededRng(base).split(i);
    auto pick = sample_without_replacement(eligible.size(), static_cast<std::size_t>(opts.m), local);
    std::sort(pick.begin(), pick.end());
    out[i].hard_negatives.clear();
    for (auto p : pick) {
      const int r = eligible[p];
      out[i].hard_negatives.push_back(pool[order[static_cast<std::size_t>(r - 1)]]);
      ranks[i].push_back(r);
    }
  });
  if (report) {
    report->window_lo = lo;
    report->window_hi = hi;
    report->warnings = std::move(warnings);
    report->ranks = std::move(ranks);
  }
  return out;
}

}  // namespace embforge
