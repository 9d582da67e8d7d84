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

// Command-line driver: curation, mining, the three training stages, teacher
// caching and evaluation.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "embforge/data.hpp"
#include "embforge/evaluation.hpp"
#include "embforge/io.hpp"
#include "embforge/model.hpp"
#include "embforge/training.hpp"

using namespace embforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return kExitUsage;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitData;
  }
}

std::vector<int> parse_int_list(const std::string& s, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      require(used == item.size(), ErrorKind::kConfig, "");
    } catch (...) {
      raise(ErrorKind::kConfig, std::string(flag) + ": expected a comma-separated integer list");
    }
  }
  require(!out.empty(), ErrorKind::kConfig, std::string(flag) + ": empty list");
  return out;
}

// Writes to --out atomically, or to stdout when no path was given.
void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

Json load_config(const std::string& path) {
  if (path.empty()) return Json::object();
  try {
    return Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    raise(ErrorKind::kConfig, path + ": invalid JSON: " + e.what());
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string ckpt;
  std::string out;
  std::string window = "50,100";
  int m = 7;
  std::string k = "1,5,10";
  std::string dims;
  std::string stage;

  // curate
  std::string input;
  std::string kind = "symmetric";
  std::string instruction;
  std::string labels;
  int samples_per_class = 1;
  // mine / training / margin / teacher-cache
  std::string data;
  std::string pool;
  std::string teacher;
  std::string embeddings;
  std::string log;
  // eval / sweep
  std::string task;
  std::string corpus;
};

std::uint64_t seed_or(const Options& o, std::uint64_t fallback) { return o.seed ? *o.seed : fallback; }

// Curation -------------------------------------------------------------------

int run_curate(const Options& o) {
  const Json cfg = load_config(o.config);
  const std::uint64_t seed = seed_or(o, cfg.value("seed", std::uint64_t{0}));
  SeededRng rng(seed);
  std::vector<TrainingSample> out;
  if (o.kind == "symmetric") {
    const auto pairs = read_scored_pairs(o.input);
    out = process_symmetric(pairs, o.instruction);
  } else if (o.kind == "asymmetric") {
    const auto items = read_labeled_texts(o.input);
    std::vector<std::string> global;
    if (!o.labels.empty()) {
      global = read_lines(o.labels);
    } else {
      for (const auto& it : items) global.push_back(it.label);
    }
    std::map<std::string, std::string> instructions;
    if (cfg.contains("instructions")) {
      require(cfg["instructions"].is_object(), ErrorKind::kConfig,
              "config 'instructions' must map dataset_id to instruction");
      for (auto it = cfg["instructions"].begin(); it != cfg["instructions"].end(); ++it) {
        instructions[it.key()] = it.value().get<std::string>();
      }
    }
    if (!o.instruction.empty()) {
      for (const auto& it : items) instructions.emplace(it.dataset_id, o.instruction);
    }
    out = process_asymmetric(items, global, o.m, rng, instructions);
  } else if (o.kind == "examples") {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& it : read_labeled_texts(o.input)) groups[it.label].push_back(it.text);
    out = example_based_labeling(groups, o.samples_per_class, o.m, rng, o.instruction);
  } else {
    raise(ErrorKind::kConfig, "--kind must be symmetric, asymmetric or examples");
  }
  validate_samples(out);
  emit(o.out, training_jsonl(out));
  return kExitOk;
}

// Mining ---------------------------------------------------------------------

int run_mine(const Options& o) {
  const Json cfg = load_config(o.config);
  const auto win = parse_int_list(o.window, "--window");
  require(win.size() == 2, ErrorKind::kConfig, "--window expects LO,HI");
  const Model model = load_checkpoint(o.ckpt);
  const auto samples = read_training_jsonl(o.data);
  const CandidatePool pool(read_lines(o.pool));
  SeededRng rng(seed_or(o, cfg.value("seed", std::uint64_t{0})));
  MiningReport report;
  const auto mined = mine_hard_negatives(model, samples, pool, MiningOptions{win[0], win[1], o.m}, rng, &report);
  emit(o.out, training_jsonl(mined));
  return kExitOk;
}

// Training -------------------------------------------------------------------

std::vector<std::string> vocabulary_texts(std::span<const TrainingSample> samples) {
  std::vector<std::string> texts;
  for (const auto& s : samples) {
    texts.push_back(query_text(s));
    texts.push_back(passage_text(s, s.positive));
    for (const auto& n : s.hard_negatives) texts.push_back(passage_text(s, n));
  }
  return texts;
}

EncoderConfig encoder_from_json(const Json& j) {
  EncoderConfig c;
  if (j.is_null()) return c;
  require(j.is_object(), ErrorKind::kConfig, "'encoder' must be a JSON object");
  try {
    c.dim = j.value("dim", c.dim);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.max_len = j.value("max_len", c.max_len);
    c.positional = j.value("positional", c.positional);
    if (j.contains("mask")) c.mask = parse_mask_mode(j["mask"].get<std::string>());
  } catch (const Json::exception& e) {
    raise(ErrorKind::kConfig, std::string("encoder config: ") + e.what());
  }
  return c;
}

int run_train(Stage stage, const Options& o) {
  Json cfg_json = load_config(o.config);
  require(cfg_json.is_object(), ErrorKind::kConfig, "config must be a JSON object");
  if (!cfg_json.contains("stage")) cfg_json["stage"] = to_string(stage);
  Json encoder_json = cfg_json.contains("encoder") ? cfg_json["encoder"] : Json();
  StageConfig cfg = stage_config_from_json(cfg_json);
  require(cfg.stage == stage, ErrorKind::kConfig,
          std::string("config stage '") + to_string(cfg.stage) + "' does not match command '" +
              to_string(stage) + "'");
  if (o.seed) cfg.seed = *o.seed;

  const auto samples = read_training_jsonl(o.data);
  Model model;
  if (!o.ckpt.empty()) {
    model = load_checkpoint(o.ckpt);
  } else {
    require(stage == Stage::kPretrain, ErrorKind::kConfig,
            std::string(to_string(stage)) + " needs --ckpt with the previous stage's checkpoint");
    const auto texts = vocabulary_texts(samples);
    model = init_model(Tokenizer::build(texts), encoder_from_json(encoder_json), cfg.seed);
  }

  std::optional<TeacherCache> teacher;
  if (stage == Stage::kDistill) {
    require(!o.teacher.empty(), ErrorKind::kConfig, "distill needs --teacher with a teacher cache");
    try {
      teacher = teacher_cache_from_json(Json::parse(read_file(o.teacher)));
    } catch (const Json::exception& e) {
      raise(ErrorKind::kData, o.teacher + ": invalid JSON: " + e.what());
    }
  }

  std::string log_text;
  const auto result = run_stage(cfg, samples, std::move(model), teacher ? &*teacher : nullptr,
                                [&](const StepLog& s) { log_text += to_json(s).dump() + "\n"; });
  save_checkpoint(o.out, result.model);
  const std::string log_path = o.log.empty() ? o.out + ".log.jsonl" : o.log;
  write_file_atomic(log_path, log_text);
  return kExitOk;
}

int run_teacher_cache(const Options& o) {
  require(o.ckpt.empty() != o.embeddings.empty(), ErrorKind::kConfig,
          "teacher-cache needs exactly one of --ckpt or --embeddings");
  const auto samples = read_training_jsonl(o.data);
  TeacherCache cache;
  if (!o.ckpt.empty()) {
    cache = build_teacher_cache(load_checkpoint(o.ckpt), samples);
  } else {
    const auto records = read_jsonl(o.embeddings);
    cache = build_teacher_cache(records, samples);
  }
  emit(o.out, to_json(cache).dump() + "\n");
  return kExitOk;
}

// Evaluation -----------------------------------------------------------------

int run_eval(const Options& o) {
  const Model model = load_checkpoint(o.ckpt);
  const auto task = load_retrieval_task(o.task, o.corpus);
  const auto cutoffs = parse_int_list(o.k, "--k");
  const auto emb = embed_task(model, task);
  const int dim = o.dims.empty() ? 0 : parse_int_list(o.dims, "--dims").front();
  require(dim >= 0 && dim <= model.params.config.dim, ErrorKind::kConfig, "--dims exceeds model dimension");
  EvalRun run = evaluate_embedded(emb, task.positive_idx, dim, cutoffs);
  run.model_id = o.ckpt;
  emit(o.out, to_json(run).dump(2) + "\n");
  return kExitOk;
}

int run_sweep(const Options& o) {
  const Model model = load_checkpoint(o.ckpt);
  const auto task = load_retrieval_task(o.task, o.corpus);
  const auto cutoffs = parse_int_list(o.k, "--k");
  std::vector<int> dims;
  if (o.dims.empty()) {
    for (int d = model.params.config.dim; d >= 1; d /= 2) dims.push_back(d);
  } else {
    dims = parse_int_list(o.dims, "--dims");
  }
  Json rows = Json::array();
  for (auto& row : matryoshka_sweep(model, task, dims, cutoffs)) {
    row.run.model_id = o.ckpt;
    rows.push_back(to_json(row));
  }
  emit(o.out, rows.dump(2) + "\n");
  return kExitOk;
}

int run_margin(const Options& o) {
  const Model model = load_checkpoint(o.ckpt);
  const auto samples = read_training_jsonl(o.data);
  std::string text;
  for (const auto& rec : margin_report(model, samples)) text += to_json(rec).dump() + "\n";
  emit(o.out, text);
  return kExitOk;
}

// Reference-scale hyperparameters next to the desk-scale defaults used here.
Json reference_defaults(const std::string& stage) {
  Json all = Json::object();
  const char* names[] = {"pretrain", "finetune", "distill"};
  const int ref_batch[] = {512, 120, 120};
  const double ref_lr[] = {1e-4, 2e-5, 1e-5};
  const char* ref_warmup[] = {"10%", "200", "200"};
  const char* ref_steps[] = {"19k", "12k", "24k"};
  const int gpus[] = {48, 4, 2};
  for (int i = 0; i < 3; ++i) {
    const StageConfig desk = StageConfig::defaults(parse_stage(names[i]));
    Json p;
    p["batch_size"] = ref_batch[i];
    p["learning_rate"] = ref_lr[i];
    p["warmup_steps"] = ref_warmup[i];
    p["training_steps"] = ref_steps[i];
    p["gpus"] = gpus[i];
    p["epochs"] = 1;
    Json d = to_json(desk);
    if (!desk.warmup_steps) d["warmup_steps"] = "10%";
    all[names[i]] = {{"reference", p}, {"desk", d}};
  }
  Json common;
  common["reference"] = {{"embedding_dim", 896},
                     {"max_input_length", 512},
                     {"mrl_dims", {896, 512, 256, 128, 64}},
                     {"mrl_weights", {1.0, 0.3, 0.2, 0.1, 0.1}},
                     {"gamma", 0.5},
                     {"hard_negatives", {{"m", 7}, {"window", {50, 100}}}},
                     {"tau_cl", 0.01},
                     {"tau_kl", 0.05},
                     {"loss_weights", {{"cl", 0.3}, {"kl", 0.7}}},
                     {"optimizer", "Adam"},
                     {"pooling", "mean"},
                     {"attention", "bidirectional"},
                     {"precision", "bfloat16"}};
  const EncoderConfig enc;
  common["desk"] = {{"embedding_dim", enc.dim},
                    {"layers", enc.layers},
                    {"heads", enc.heads},
                    {"max_input_length", enc.max_len},
                    {"mrl_dims", {64, 32, 16, 8}},
                    {"mrl_weights", {1.0, 0.3, 0.2, 0.1}},
                    {"gamma", 0.5},
                    {"hard_negatives", {{"m", 7}, {"window", {50, 100}}}},
                    {"tau_cl", 0.01},
                    {"tau_kl", 0.05},
                    {"loss_weights", {{"cl", 0.3}, {"kl", 0.7}}},
                    {"optimizer", "Adam (beta1 0.9, beta2 0.999, eps 1e-8)"},
                    {"pooling", "mean"},
                    {"attention", "bidirectional"},
                    {"precision", "float32"}};
  if (!stage.empty()) {
    parse_stage(stage);
    return {{stage, all[stage]}, {"common", common}};
  }
  all["common"] = common;
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embforge: train and evaluate small instruction-tuned text embedding models"};
  app.require_subcommand(0, 1);
  Options o;
  bool show_defaults = false;
  app.add_flag("--paper-defaults", show_defaults, "Print the reference hyperparameters next to the desk-scale defaults");
  app.add_option("--stage", o.stage, "Restrict --paper-defaults to one stage");

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON config file");
    c->add_option("--seed", o.seed, "Random seed (overrides the config)");
    c->add_option("--out", o.out, "Output path (stdout when omitted, where allowed)");
  };

  auto* curate = app.add_subcommand("curate", "Build training samples from scored pairs or labeled texts");
  common(curate);
  curate->add_option("--input", o.input, "Input JSONL")->required();
  curate->add_option("--kind", o.kind, "symmetric | asymmetric | examples");
  curate->add_option("--instruction", o.instruction, "Task instruction");
  curate->add_option("--labels", o.labels, "Global label pool, one per line (asymmetric)");
  curate->add_option("--m", o.m, "Negatives per sample");
  curate->add_option("--samples-per-class", o.samples_per_class, "Samples per class (examples)");

  auto* mine = app.add_subcommand("mine", "Re-mine hard negatives from a rank window");
  common(mine);
  mine->add_option("--ckpt", o.ckpt, "Encoder checkpoint")->required();
  mine->add_option("--data", o.data, "Training JSONL")->required();
  mine->add_option("--pool", o.pool, "Candidate pool, one passage per line")->required();
  mine->add_option("--window", o.window, "Rank window LO,HI (1-indexed, inclusive)");
  mine->add_option("--m", o.m, "Negatives per sample");

  std::vector<std::pair<CLI::App*, Stage>> stages;
  for (Stage s : {Stage::kPretrain, Stage::kFinetune, Stage::kDistill}) {
    auto* c = app.add_subcommand(to_string(s), std::string("Run the ") + to_string(s) + " stage");
    c->add_option("--config", o.config, "Stage config JSON")->required();
    c->add_option("--seed", o.seed, "Random seed (overrides the config)");
    c->add_option("--out", o.out, "Output checkpoint")->required();
    c->add_option("--data", o.data, "Training JSONL")->required();
    c->add_option("--ckpt", o.ckpt, s == Stage::kPretrain ? "Initial checkpoint (optional)" : "Checkpoint to continue from");
    c->add_option("--log", o.log, "Metrics log path (default: <out>.log.jsonl)");
    if (s == Stage::kDistill) c->add_option("--teacher", o.teacher, "Teacher cache JSON");
    stages.emplace_back(c, s);
  }

  auto* tcache = app.add_subcommand("teacher-cache", "Cache teacher similarity rows for distillation");
  common(tcache);
  tcache->add_option("--data", o.data, "Training JSONL")->required();
  tcache->add_option("--ckpt", o.ckpt, "Teacher checkpoint");
  tcache->add_option("--embeddings", o.embeddings, "Teacher embedding JSONL");

  auto* eval = app.add_subcommand("eval", "Retrieval metrics for a checkpoint");
  common(eval);
  eval->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  eval->add_option("--task", o.task, "Task JSONL")->required();
  eval->add_option("--corpus", o.corpus, "Corpus, one passage per line")->required();
  eval->add_option("--k", o.k, "Cutoffs, e.g. 1,5,10");
  eval->add_option("--dims", o.dims, "Evaluate on this prefix dimension");

  auto* sweep = app.add_subcommand("sweep", "Matryoshka dimension sweep");
  common(sweep);
  sweep->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  sweep->add_option("--task", o.task, "Task JSONL")->required();
  sweep->add_option("--corpus", o.corpus, "Corpus, one passage per line")->required();
  sweep->add_option("--k", o.k, "Cutoffs, e.g. 1,5,10");
  sweep->add_option("--dims", o.dims, "Prefix dimensions, e.g. 64,32,16,8");

  auto* margin = app.add_subcommand("margin", "Positive vs hard-negative similarity report");
  common(margin);
  margin->add_option("--ckpt", o.ckpt, "Checkpoint")->required();
  margin->add_option("--data", o.data, "Training JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (show_defaults) {
      std::cout << reference_defaults(o.stage).dump(2) << "\n";
      return kExitOk;
    }
    if (*curate) return run_curate(o);
    if (*mine) return run_mine(o);
    for (auto& [c, s] : stages) {
      if (*c) return run_train(s, o);
    }
    if (*tcache) return run_teacher_cache(o);
    if (*eval) return run_eval(o);
    if (*sweep) return run_sweep(o);
    if (*margin) return run_margin(o);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
