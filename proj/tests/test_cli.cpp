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

#include <cstdlib>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <limits>
#include <sys/wait.h>

#include "embforge/io.hpp"
#include "embforge/toy_corpus.hpp"

namespace fs = std::filesystem;
using namespace embforge;

namespace {

const fs::path kDir = fs::temp_directory_path() / "embforge_cli_test";

int run(const std::string& args, const std::string& stdout_file = "") {
  const std::string out = stdout_file.empty() ? (kDir / "stdout.txt").string() : stdout_file;
  const std::string cmd = std::string(EMBFORGE_BIN) + " " + args + " > " + out + " 2> " + (kDir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string p(const std::string& name) { return (kDir / name).string(); }

void write(const std::string& name, const std::string& text) {
  std::ofstream f(kDir / name, std::ios::binary);
  f << text;
}

// Toy inputs shared by the pipeline tests, built once.
struct Files {
  Files() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
    ToyCorpusOptions o;
    o.clusters = 8;
    o.docs_per_cluster = 16;
    o.train_docs = 14;
    o.pairs_per_cluster = 4;
    o.vocab = 120;
    const auto tc = make_toy_corpus(o);
    std::string pairs;
    for (const auto& s : tc.train) {
      Json j{{"text_a", s.query}, {"text_b", s.positive}, {"score", 4.5}, {"scale", "continuous"}};
      pairs += j.dump() + "\n";
    }
    pairs += Json{{"text_a", "x"}, {"text_b", "y"}, {"score", 3.0}, {"scale", "continuous"}}.dump() + "\n";
    write("pairs.jsonl", pairs);
    std::string pool;
    for (const auto& t : tc.train_pool) pool += t + "\n";
    write("pool.txt", pool);
    std::string task, corpus;
    for (std::size_t i = 0; i < tc.heldout.queries.size(); ++i) {
      task += Json{{"query", tc.heldout.queries[i]}, {"instruction", tc.heldout.instructions[i]},
                   {"positive_idx", tc.heldout.positive_idx[i]}}.dump() + "\n";
    }
    for (const auto& c : tc.heldout.corpus.passages()) corpus += c + "\n";
    write("task.jsonl", task);
    write("corpus.txt", corpus);
    write("pretrain.json", R"({"stage": "pretrain", "batch_size": 8, "learning_rate": 0.005, "seed": 1,
                               "encoder": {"dim": 16, "layers": 1, "heads": 2, "max_len": 64}})");
    write("finetune.json", R"({"stage": "finetune", "batch_size": 8, "learning_rate": 0.001, "warmup_steps": 2,
                               "loss": {"mrl_dims": [16, 8], "mrl_weights": [1.0, 0.3]}})");
    write("distill.json", R"({"stage": "distill", "batch_size": 8, "learning_rate": 0.001, "warmup_steps": 2})");
  }
};

const Files& files() {
  static Files f;
  return f;
}

}  // namespace

TEST_CASE("full pipeline through the command line") {
  files();
  REQUIRE(run("curate --kind symmetric --input " + p("pairs.jsonl") + " --instruction 'find similar' --out " + p("train.jsonl")) == 0);
  const auto train = read_jsonl(p("train.jsonl"));
  CHECK(train.size() == 64);  // 32 qualifying pairs, both directions
  CHECK(train[0]["symmetric"] == true);

  REQUIRE(run("pretrain --config " + p("pretrain.json") + " --data " + p("train.jsonl") + " --out " + p("pre.ckpt")) == 0);
  const auto log = read_jsonl(p("pre.ckpt.log.jsonl"));
  REQUIRE(log.size() == 8);
  for (const char* key : {"step", "loss", "cl", "kl", "lr"}) CHECK(log[0].contains(key));
  CHECK(log[0]["kl"].is_null());

  REQUIRE(run("mine --ckpt " + p("pre.ckpt") + " --data " + p("train.jsonl") + " --pool " + p("pool.txt") +
              " --window 50,100 --m 7 --seed 3 --out " + p("mined.jsonl")) == 0);
  const auto mined = read_jsonl(p("mined.jsonl"));
  REQUIRE(mined.size() == 64);
  for (const auto& m : mined) CHECK(m["negs"].size() == 7);

  REQUIRE(run("finetune --config " + p("finetune.json") + " --data " + p("mined.jsonl") + " --ckpt " + p("pre.ckpt") +
              " --out " + p("ft.ckpt")) == 0);
  REQUIRE(run("teacher-cache --ckpt " + p("ft.ckpt") + " --data " + p("mined.jsonl") + " --out " + p("teacher.json")) == 0);
  REQUIRE(run("distill --config " + p("distill.json") + " --data " + p("mined.jsonl") + " --ckpt " + p("pre.ckpt") +
              " --teacher " + p("teacher.json") + " --out " + p("st.ckpt")) == 0);
  const auto dlog = read_jsonl(p("st.ckpt.log.jsonl"));
  CHECK(dlog[0]["kl"].is_number());

  REQUIRE(run("eval --ckpt " + p("ft.ckpt") + " --task " + p("task.jsonl") + " --corpus " + p("corpus.txt") + " --k 1,5,10",
              p("eval.json")) == 0);
  const Json report = Json::parse(read_file(p("eval.json")));
  CHECK(report["metrics"]["MRR@1"] == report["metrics"]["Recall@1"]);
  CHECK(report["metrics"].contains("Recall@10"));
  CHECK(report["ranks"].size() == 8);

  REQUIRE(run("sweep --ckpt " + p("ft.ckpt") + " --task " + p("task.jsonl") + " --corpus " + p("corpus.txt") +
              " --dims 16,8 --out " + p("sweep.json")) == 0);
  const Json sweep = Json::parse(read_file(p("sweep.json")));
  REQUIRE(sweep.size() == 2);
  CHECK(sweep[0]["relative_change_pct"]["Recall@1"] == 0.0);

  REQUIRE(run("margin --ckpt " + p("ft.ckpt") + " --data " + p("mined.jsonl") + " --out " + p("margin.jsonl")) == 0);
  CHECK(read_jsonl(p("margin.jsonl")).size() == 64);

  // Same inputs and seed, byte-identical outputs.
  REQUIRE(run("mine --ckpt " + p("pre.ckpt") + " --data " + p("train.jsonl") + " --pool " + p("pool.txt") +
              " --window 50,100 --m 7 --seed 3 --out " + p("mined2.jsonl")) == 0);
  CHECK(read_file(p("mined.jsonl")) == read_file(p("mined2.jsonl")));
  REQUIRE(run("pretrain --config " + p("pretrain.json") + " --data " + p("train.jsonl") + " --out " + p("pre2.ckpt")) == 0);
  CHECK(read_file(p("pre.ckpt")) == read_file(p("pre2.ckpt")));
  CHECK(read_file(p("pre.ckpt.log.jsonl")) == read_file(p("pre2.ckpt.log.jsonl")));
  REQUIRE(run("finetune --config " + p("finetune.json") + " --data " + p("mined.jsonl") + " --ckpt " + p("pre.ckpt") +
              " --seed 0 --out " + p("ft2.ckpt")) == 0);
  CHECK(read_file(p("ft.ckpt")) == read_file(p("ft2.ckpt")));

  // No temporary files are left behind by atomic writes.
  for (const auto& e : fs::directory_iterator(kDir)) CHECK(e.path().string().find(".tmp") == std::string::npos);
}

TEST_CASE("exit codes") {
  files();
  CHECK(run("finetune --data " + p("mined.jsonl") + " --out " + p("x.ckpt")) == 1);
  CHECK(run("eval --ckpt a --task b --corpus c --no-such-flag") == 1);
  CHECK(run("bogus-command") == 1);
  CHECK(run("eval --ckpt " + p("ft.ckpt") + " --task " + p("task.jsonl") + " --corpus " + p("corpus.txt") + " --k 0") == 1);
  CHECK(run("mine --ckpt " + p("pre.ckpt") + " --data " + p("train.jsonl") + " --pool " + p("pool.txt") + " --window 50") == 1);
  write("bad_stage.json", R"({"stage": "distill"})");
  CHECK(run("finetune --config " + p("bad_stage.json") + " --data " + p("mined.jsonl") + " --ckpt " + p("pre.ckpt") + " --out " + p("x.ckpt")) == 1);

  CHECK(run("eval --ckpt " + p("missing.ckpt") + " --task " + p("task.jsonl") + " --corpus " + p("corpus.txt")) == 2);
  write("broken.jsonl", "{\"query\": \"a\", \"pos\": \n");
  CHECK(run("margin --ckpt " + p("ft.ckpt") + " --data " + p("broken.jsonl")) == 2);
  write("selfneg.jsonl", R"({"query": "a", "pos": "b", "negs": ["b"]})" "\n");
  CHECK(run("margin --ckpt " + p("ft.ckpt") + " --data " + p("selfneg.jsonl")) == 2);
  CHECK(run("distill --config " + p("distill.json") + " --data " + p("train.jsonl") + " --ckpt " + p("pre.ckpt") +
            " --teacher " + p("teacher.json") + " --out " + p("x.ckpt")) == 2);

  // A checkpoint whose last weight is infinite fails numerically.
  std::string bytes = read_file(p("ft.ckpt"));
  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(bytes.data() + bytes.size() - sizeof(float), &inf, sizeof(float));
  write("inf.ckpt", bytes);
  CHECK(run("eval --ckpt " + p("inf.ckpt") + " --task " + p("task.jsonl") + " --corpus " + p("corpus.txt")) == 3);
  CHECK(run("finetune --config " + p("finetune.json") + " --data " + p("mined.jsonl") + " --ckpt " + p("inf.ckpt") +
            " --out " + p("x.ckpt")) == 3);
  CHECK(!fs::exists(p("x.ckpt")));

  CHECK(run("--paper-defaults", p("defaults.json")) == 0);
  const Json d = Json::parse(read_file(p("defaults.json")));
  CHECK(d["pretrain"]["reference"]["batch_size"] == 512);
  CHECK(d["common"]["reference"]["tau_cl"] == 0.01);
}
