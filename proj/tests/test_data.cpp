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

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <set>

#include "embforge/data.hpp"
#include "embforge/instruction.hpp"
#include "fixtures.hpp"

using namespace embforge;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kDomain;
}

// Brute-force 1-indexed rank of pool[j] for one query: count strictly better
// entries plus equal entries with a lower index.
int brute_rank(const VecD& q, const MatD& pool, Eigen::Index j) {
  auto cos = [&](Eigen::Index r) {
    double dot = 0, nq = 0, np = 0;
    for (Eigen::Index c = 0; c < q.size(); ++c) {
      dot += q[c] * pool(r, c);
      nq += q[c] * q[c];
      np += pool(r, c) * pool(r, c);
    }
    return dot / std::sqrt(nq * np);
  };
  const double s = cos(j);
  int rank = 1;
  for (Eigen::Index r = 0; r < pool.rows(); ++r) {
    const double o = cos(r);
    if (o > s || (o == s && r < j)) ++rank;
  }
  return rank;
}

}  // namespace

TEST_CASE("format_query template") {
  CHECK(format_query("", "hello") == "hello");
  CHECK(format_query("Retrieve semantically similar text", "cats purr") ==
        "Instruct: Retrieve semantically similar text \n Query: cats purr");
  CHECK(format_query("Categorizing the given news title", "q") ==
        "Instruct: Categorizing the given news title \n Query: q");
  CHECK(kind_of([] { format_query("x", ""); }) == ErrorKind::kInput);
}

TEST_CASE("symmetric processing") {
  std::vector<ScoredPair> pairs{{"a", "b", 4.5, ScoreScale::kContinuous}};
  auto out = process_symmetric(pairs, "inst");
  REQUIRE(out.size() == 2);
  CHECK(out[0].query == "a");
  CHECK(out[0].positive == "b");
  CHECK(out[1].query == "b");
  CHECK(out[1].positive == "a");
  CHECK(out[0].symmetric);
  CHECK(out[1].instruction == "inst");

  pairs = {{"a", "b", 4.0, ScoreScale::kContinuous}};
  CHECK(process_symmetric(pairs).empty());
  pairs = {{"a", "b", 1, ScoreScale::kBinary}};
  CHECK(process_symmetric(pairs).size() == 2);
  pairs = {{"a", "b", 0, ScoreScale::kBinary}};
  CHECK(process_symmetric(pairs).empty());

  pairs = {{"a", "b", 5.5, ScoreScale::kContinuous}};
  CHECK(kind_of([&] { process_symmetric(pairs); }) == ErrorKind::kData);
  pairs = {{"a", "b", 0.5, ScoreScale::kBinary}};
  CHECK(kind_of([&] { process_symmetric(pairs); }) == ErrorKind::kData);
  CHECK(kind_of([] { process_symmetric({}); }) == ErrorKind::kData);
}

TEST_CASE("symmetric output count is twice the qualifying pairs") {
  SeededRng rng(3);
  std::vector<ScoredPair> pairs;
  std::size_t qualifying = 0;
  for (int i = 0; i < 500; ++i) {
    ScoredPair p{"a" + std::to_string(i), "b" + std::to_string(i), 0, ScoreScale::kContinuous};
    if (i % 3 == 0) {
      p.scale = ScoreScale::kBinary;
      p.score = static_cast<double>(rng.uniform_index(2));
      qualifying += p.score == 1.0;
    } else {
      p.score = 5.0 * rng.uniform();
      qualifying += p.score > 4.0;
    }
    pairs.push_back(p);
  }
  CHECK(process_symmetric(pairs).size() == 2 * qualifying);
}

TEST_CASE("asymmetric processing") {
  SeededRng rng(1);
  std::vector<LabeledText> items;
  for (int l = 0; l < 8; ++l) items.push_back({"text" + std::to_string(l), "L" + std::to_string(l), "d8"});
  auto out = process_asymmetric(items, {}, 7, rng, {{"d8", "Classify"}});
  REQUIRE(out.size() == 8);
  for (const auto& s : out) {
    CHECK(s.hard_negatives.size() == 7);
    CHECK_FALSE(s.symmetric);
    CHECK(s.instruction == "Classify");
    std::set<std::string> negs(s.hard_negatives.begin(), s.hard_negatives.end());
    CHECK(negs.size() == 7);
    CHECK_FALSE(negs.count(s.positive));
  }

  std::vector<LabeledText> small{{"x", "A", "d3"}, {"y", "B", "d3"}, {"z", "C", "d3"}};
  std::vector<std::string> global{"A", "G1", "G2", "G3", "G4", "G5", "G6", "G6"};
  auto s3 = process_asymmetric(small, global, 7, rng);
  for (const auto& s : s3) {
    std::set<std::string> negs(s.hard_negatives.begin(), s.hard_negatives.end());
    CHECK(negs.size() == 7);
    CHECK_FALSE(negs.count(s.positive));
    // Both other in-dataset labels come first.
    std::set<std::string> in_ds{"A", "B", "C"};
    in_ds.erase(s.positive);
    CHECK(std::set<std::string>(s.hard_negatives.begin(), s.hard_negatives.begin() + 2) == in_ds);
    for (std::size_t k = 2; k < 7; ++k) CHECK(s.hard_negatives[k][0] == 'G');
  }

  std::vector<LabeledText> one{{"x", "A", "d1"}};
  CHECK(kind_of([&] { process_asymmetric(one, {}, 7, rng); }) == ErrorKind::kData);
  CHECK(kind_of([&] { process_asymmetric(one, global, 0, rng); }) == ErrorKind::kConfig);
}

TEST_CASE("example-based labeling") {
  SeededRng rng(2);
  std::map<std::string, std::vector<std::string>> two{{"a", {"a1", "a2"}}, {"b", {"b1", "b2"}}};
  auto out = example_based_labeling(two, 3, 1, rng, "Find same class");
  for (const auto& s : out) {
    REQUIRE(s.hard_negatives.size() == 1);
    CHECK(s.query[0] == s.positive[0]);
    CHECK(s.hard_negatives[0][0] != s.query[0]);
    CHECK(s.query != s.positive);
    CHECK(s.symmetric);
  }

  std::map<std::string, std::vector<std::string>> five;
  std::map<std::string, std::string> label_of;
  for (int c = 0; c < 5; ++c) {
    for (int t = 0; t < 6; ++t) {
      const std::string text = "c" + std::to_string(c) + "_t" + std::to_string(t);
      five["c" + std::to_string(c)].push_back(text);
      label_of[text] = "c" + std::to_string(c);
    }
  }
  out = example_based_labeling(five, 20, 4, rng);
  CHECK(out.size() == 100);
  for (const auto& s : out) {
    CHECK(label_of[s.query] == label_of[s.positive]);
    CHECK(s.query != s.positive);
    for (const auto& n : s.hard_negatives) CHECK(label_of[n] != label_of[s.query]);
  }

  std::map<std::string, std::vector<std::string>> single{{"a", {"a1", "a2"}}};
  CHECK(kind_of([&] { example_based_labeling(single, 1, 1, rng); }) == ErrorKind::kData);
}

TEST_CASE("validator rejects positive among negatives") {
  TrainingSample s{"", "q", "p", {"n", "p"}, false};
  CHECK(kind_of([&] { s.validate(); }) == ErrorKind::kData);
  std::vector<TrainingSample> v{{"", "q", "p", {"n"}, false}, s};
  try {
    validate_samples(v);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("sample 1") != std::string::npos);
  }
}

TEST_CASE("jsonl round trip") {
  std::vector<TrainingSample> v{{"inst", "q \"1\"", "p\n", {"n1", "n2"}, true}, {"", "q2", "p2", {}, false}};
  const std::string text = training_jsonl(v);
  CHECK(text.find("\"pos\"") != std::string::npos);
  CHECK(text.find("\"negs\"") != std::string::npos);
  std::vector<TrainingSample> back;
  for (std::size_t start = 0; start < text.size();) {
    const auto end = text.find('\n', start);
    back.push_back(sample_from_json(Json::parse(text.substr(start, end - start))));
    start = end + 1;
  }
  CHECK(back == v);
  CHECK(kind_of([] { sample_from_json(Json::parse(R"({"query": 3})")); }) == ErrorKind::kData);
}

TEST_CASE("candidate pool rejects duplicates") {
  CHECK(kind_of([] { CandidatePool({"a", "b", "a"}); }) == ErrorKind::kData);
  CHECK(CandidatePool({"a", "b"}).size() == 2);
}

TEST_CASE("mining window on a 100-passage pool") {
  const auto pool_texts = fixture::passages(100, 40, 9);
  const CandidatePool pool(pool_texts);
  std::vector<std::string> vocab = pool_texts;
  vocab.push_back(format_query("find it", "x"));
  const Model model = fixture::small_model(vocab);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 12; ++i) samples.push_back({"find it", pool_texts[static_cast<std::size_t>(i)], pool_texts[static_cast<std::size_t>(i + 1)], {}, false});

  MatD emb(100, 16);
  for (Eigen::Index r = 0; r < 100; ++r) emb.row(r) = model.encode_text(pool[static_cast<std::size_t>(r)]).cast<double>().transpose();

  SeededRng rng(4);
  MiningReport report;
  const auto mined = mine_hard_negatives(model, samples, pool, MiningOptions{}, rng, &report);
  CHECK(report.warnings.empty());
  for (std::size_t i = 0; i < mined.size(); ++i) {
    const auto& s = mined[i];
    REQUIRE(s.hard_negatives.size() == 7);
    CHECK(std::set<std::string>(s.hard_negatives.begin(), s.hard_negatives.end()).size() == 7);
    const VecD q = model.encode_text(query_text(s)).cast<double>();
    for (std::size_t k = 0; k < 7; ++k) {
      const auto j = std::find(pool_texts.begin(), pool_texts.end(), s.hard_negatives[k]) - pool_texts.begin();
      const int r = brute_rank(q, emb, j);
      CHECK(r == report.ranks[i][k]);
      CHECK(r >= 50);
      CHECK(r <= 100);
      CHECK(s.hard_negatives[k] != s.positive);
    }
  }

  SeededRng again(4);
  CHECK(mine_hard_negatives(model, samples, pool, MiningOptions{}, again) == mined);
}

TEST_CASE("mining excludes a positive inside the window") {
  const auto pool_texts = fixture::passages(120, 40, 5);
  const CandidatePool pool(pool_texts);
  const Model model = fixture::small_model(pool_texts);
  TrainingSample s{"", pool_texts[0], "", {}, false};
  MatD emb(120, 16);
  for (Eigen::Index r = 0; r < 120; ++r) emb.row(r) = model.encode_text(pool_texts[static_cast<std::size_t>(r)]).cast<double>().transpose();
  const auto order = rank_by_similarity(model.encode_text(query_text(s)).cast<double>(), emb);
  s.positive = pool_texts[order[59]];  // rank 60
  std::vector<TrainingSample> v{s};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed);
    MiningReport rep;
    const auto out = mine_hard_negatives(model, v, pool, MiningOptions{55, 65, 7}, rng, &rep);
    CHECK(std::count(out[0].hard_negatives.begin(), out[0].hard_negatives.end(), s.positive) == 0);
    CHECK(std::find(rep.ranks[0].begin(), rep.ranks[0].end(), 60) == rep.ranks[0].end());
  }
  // Window [55,61] minus the positive holds 6 candidates.
  SeededRng rng(1);
  CHECK(kind_of([&] { mine_hard_negatives(model, v, pool, MiningOptions{55, 61, 7}, rng); }) == ErrorKind::kData);
}

TEST_CASE("mining small-pool fallback and thread independence") {
  const auto pool_texts = fixture::passages(30, 20, 2);
  const Model model = fixture::small_model(pool_texts);
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 6; ++i) samples.push_back({"", pool_texts[static_cast<std::size_t>(i)], pool_texts[static_cast<std::size_t>(i + 10)], {}, false});
  SeededRng rng(8);
  MiningReport rep;
  const auto one = mine_hard_negatives(model, samples, CandidatePool(pool_texts), MiningOptions{}, rng, &rep);
  CHECK(rep.window_lo == 15);
  CHECK(rep.window_hi == 30);
  REQUIRE(rep.warnings.size() == 1);
  for (const auto& r : rep.ranks) {
    for (int x : r) CHECK((x >= 15 && x <= 30));
  }

  setenv("EMBFORGE_THREADS", "3", 1);
  SeededRng rng2(8);
  const auto three = mine_hard_negatives(model, samples, CandidatePool(pool_texts), MiningOptions{}, rng2);
  unsetenv("EMBFORGE_THREADS");
  CHECK(training_jsonl(one) == training_jsonl(three));
}

TEST_CASE("assemble_batch formatting and shapes") {
  std::vector<std::string> texts{"alpha beta", "gamma delta", "eps zeta", format_query("Retrieve similar", "x")};
  const Model model = fixture::small_model(texts);
  TrainingSample sym{"Retrieve similar", "alpha beta", "gamma delta", {"eps zeta"}, true};
  TrainingSample asym{"Retrieve similar", "alpha beta", "gamma delta", {"eps zeta"}, false};
  std::vector<TrainingSample> v{sym, asym};
  const auto b = assemble_batch(std::span<const TrainingSample>(v), model);
  const Vec<float> sym_pos = l2_normalize(model.encode_text("Instruct: Retrieve similar \n Query: gamma delta"));
  const Vec<float> raw_pos = l2_normalize(model.encode_text("gamma delta"));
  CHECK((b.positives.row(0).transpose() - sym_pos).norm() == 0.0f);
  CHECK((b.positives.row(1).transpose() - raw_pos).norm() == 0.0f);
  CHECK((b.queries.row(0) - b.queries.row(1)).norm() == 0.0f);
  CHECK(std::abs(b.queries.row(0).norm() - 1.0f) < 1e-6f);

  std::vector<TrainingSample> single{{"", "alpha beta", "gamma delta", {}, false}};
  const auto b1 = assemble_batch(std::span<const TrainingSample>(single), model);
  CHECK(b1.queries.rows() == 1);
  CHECK(b1.positives.cols() == 16);
  CHECK(b1.hard_negatives.rows() == 0);
  CHECK(b1.negatives_per_sample == 0);

  std::vector<TrainingSample> ragged{sym, single[0]};
  CHECK(kind_of([&] { assemble_batch(std::span<const TrainingSample>(ragged), model); }) == ErrorKind::kData);
}
