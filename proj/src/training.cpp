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

#include "embforge/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>

#include "embforge/parallel.hpp"

namespace embforge {

const char* to_string(Stage s) {
  switch (s) {
    case Stage::kPretrain: return "pretrain";
    case Stage::kFinetune: return "finetune";
    case Stage::kDistill: return "distill";
  }
  return "?";
}

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::kPretrain;
  if (s == "finetune") return Stage::kFinetune;
  if (s == "distill") return Stage::kDistill;
  raise(ErrorKind::kConfig, "unknown stage '" + s + "' (expected pretrain, finetune or distill)");
}

void StageConfig::validate() const {
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be >= 1");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, ErrorKind::kConfig,
          "learning_rate must be finite and non-negative");
  require(!warmup_steps || *warmup_steps >= 0, ErrorKind::kConfig, "warmup_steps must be >= 0");
  require(epochs >= 1, ErrorKind::kConfig, "epochs must be >= 1");
}

StageConfig StageConfig::defaults(Stage stage) {
  StageConfig c;
  c.stage = stage;
  switch (stage) {
    case Stage::kPretrain:
      c.batch_size = 32;
      c.learning_rate = 1e-4;
      break;
    case Stage::kFinetune:
      c.batch_size = 16;
      c.learning_rate = 2e-5;
      c.warmup_steps = 200;
      break;
    case Stage::kDistill:
      c.batch_size = 16;
      c.learning_rate = 1e-5;
      c.warmup_steps = 200;
      break;
  }
  return c;
}

LossConfig effective_loss(const StageConfig& cfg) {
  LossConfig l = cfg.loss;
  if (cfg.stage == Stage::kPretrain) {
    l.enable_pairwise_mix = false;
    l.enable_listwise_mix = false;
    l.gamma = 0.0;
  }
  return l;
}

// JSON -----------------------------------------------------------------------

namespace {

template <typename T>
T field(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    raise(ErrorKind::kConfig, std::string("config field '") + key + "': " + e.what());
  }
}

void reject_unknown(const Json& j, std::initializer_list<const char*> known, const char* where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return it.key() == k; });
    require(ok, ErrorKind::kConfig, std::string(where) + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

LossConfig loss_config_from_json(const Json& j, LossConfig base) {
  require(j.is_object(), ErrorKind::kConfig, "loss config must be a JSON object");
  reject_unknown(j,
                 {"tau_cl", "tau_kl", "gamma", "enable_pairwise_mix", "enable_listwise_mix",
                  "mrl_dims", "mrl_weights", "cl_weight", "kl_weight"},
                 "loss");
  base.tau_cl = field(j, "tau_cl", base.tau_cl);
  base.tau_kl = field(j, "tau_kl", base.tau_kl);
  base.gamma = field(j, "gamma", base.gamma);
  base.enable_pairwise_mix = field(j, "enable_pairwise_mix", base.enable_pairwise_mix);
  base.enable_listwise_mix = field(j, "enable_listwise_mix", base.enable_listwise_mix);
  base.mrl_dims = field(j, "mrl_dims", base.mrl_dims);
  base.mrl_weights = field(j, "mrl_weights", base.mrl_weights);
  base.cl_weight = field(j, "cl_weight", base.cl_weight);
  base.kl_weight = field(j, "kl_weight", base.kl_weight);
  return base;
}

Json to_json(const LossConfig& c) {
  Json j;
  j["tau_cl"] = c.tau_cl;
  j["tau_kl"] = c.tau_kl;
  j["gamma"] = c.gamma;
  j["enable_pairwise_mix"] = c.enable_pairwise_mix;
  j["enable_listwise_mix"] = c.enable_listwise_mix;
  j["mrl_dims"] = c.mrl_dims;
  j["mrl_weights"] = c.mrl_weights;
  j["cl_weight"] = c.cl_weight;
  j["kl_weight"] = c.kl_weight;
  return j;
}

StageConfig stage_config_from_json(const Json& j) {
  require(j.is_object(), ErrorKind::kConfig, "stage config must be a JSON object");
  reject_unknown(j,
                 {"stage", "batch_size", "learning_rate", "warmup_steps", "epochs", "loss", "seed",
                  "encoder"},
                 "stage config");
  require(j.contains("stage"), ErrorKind::kConfig, "stage config: missing 'stage'");
  StageConfig c = StageConfig::defaults(parse_stage(field<std::string>(j, "stage", "")));
  c.batch_size = field(j, "batch_size", c.batch_size);
  c.learning_rate = field(j, "learning_rate", c.learning_rate);
  if (j.contains("warmup_steps")) {
    if (j["warmup_steps"].is_null()) c.warmup_steps.reset();
    else c.warmup_steps = field(j, "warmup_steps", 0);
  }
  c.epochs = field(j, "epochs", c.epochs);
  c.seed = field<std::uint64_t>(j, "seed", c.seed);
  if (j.contains("loss")) c.loss = loss_config_from_json(j["loss"], c.loss);
  c.validate();
  require(c.learning_rate > 0.0, ErrorKind::kConfig, "learning_rate must be > 0");
  return c;
}

Json to_json(const StageConfig& c) {
  Json j;
  j["stage"] = to_string(c.stage);
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["warmup_steps"] = c.warmup_steps ? Json(*c.warmup_steps) : Json(nullptr);
  j["epochs"] = c.epochs;
  j["loss"] = to_json(c.loss);
  j["seed"] = c.seed;
  return j;
}

// Teacher cache --------------------------------------------------------------

std::string sample_id(std::size_t index) { return std::to_string(index); }

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(ids.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) out += (i ? ", " : "") + ids[i];
  if (ids.size() > shown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

VecD to_vec(const Json& arr, const std::string& what) {
  require(arr.is_array() && !arr.empty(), ErrorKind::kData, what + ": expected a non-empty array");
  VecD v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) {
    require(arr[i].is_number(), ErrorKind::kData, what + ": non-numeric entry");
    v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  }
  require(v.allFinite(), ErrorKind::kData, what + ": non-finite entry");
  return v;
}

}  // namespace

MatD TeacherCache::rows_for(std::span<const std::string> ids) const {
  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!rows.count(id)) missing.push_back(id);
  }
  require(missing.empty(), ErrorKind::kData, "teacher cache missing sample_ids: " + join_ids(missing));
  require(!ids.empty(), ErrorKind::kData, "teacher cache: empty id list");
  const Eigen::Index w = rows.at(ids.front()).size();
  MatD out(static_cast<Eigen::Index>(ids.size()), w);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const VecD& r = rows.at(ids[i]);
    require(r.size() == w, ErrorKind::kData, "teacher cache: ragged rows in batch");
    out.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return out;
}

void TeacherCache::check_coverage(std::span<const TrainingSample> samples) const {
  std::vector<std::string> missing, wrong_width;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto id = sample_id(i);
    auto it = rows.find(id);
    if (it == rows.end()) {
      missing.push_back(id);
    } else if (it->second.size() != static_cast<Eigen::Index>(samples[i].hard_negatives.size() + 1)) {
      wrong_width.push_back(id);
    }
  }
  require(missing.empty(), ErrorKind::kData, "teacher cache missing sample_ids: " + join_ids(missing));
  require(wrong_width.empty(), ErrorKind::kData,
          "teacher rows do not match 1 + M for sample_ids: " + join_ids(wrong_width));
}

TeacherCache build_teacher_cache(const Model& teacher, std::span<const TrainingSample> samples) {
  std::vector<VecD> rows(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto& s = samples[i];
    const VecD q = teacher.encode_text(query_text(s)).cast<double>();
    VecD r(static_cast<Eigen::Index>(s.hard_negatives.size() + 1));
    r[0] = cosine_sim(q, VecD(teacher.encode_text(passage_text(s, s.positive)).cast<double>()));
    for (std::size_t k = 0; k < s.hard_negatives.size(); ++k) {
      r[static_cast<Eigen::Index>(k + 1)] =
          cosine_sim(q, VecD(teacher.encode_text(passage_text(s, s.hard_negatives[k])).cast<double>()));
    }
    rows[i] = std::move(r);
  });
  TeacherCache cache;
  for (std::size_t i = 0; i < rows.size(); ++i) cache.rows.emplace(sample_id(i), std::move(rows[i]));
  return cache;
}

TeacherCache build_teacher_cache(std::span<const Json> records, std::span<const TrainingSample> samples) {
  std::map<std::string, const Json*> by_id;
  for (std::size_t line = 0; line < records.size(); ++line) {
    const Json& r = records[line];
    const std::string where = "teacher embeddings line " + std::to_string(line + 1);
    require(r.is_object() && r.contains("sample_id") && r["sample_id"].is_string(), ErrorKind::kData,
            where + ": missing string 'sample_id'");
    require(r.contains("q") && r.contains("pos") && r.contains("negs"), ErrorKind::kData,
            where + ": needs 'q', 'pos' and 'negs'");
    const auto id = r["sample_id"].get<std::string>();
    require(by_id.emplace(id, &r).second, ErrorKind::kData, where + ": duplicate sample_id " + id);
  }
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!by_id.count(sample_id(i))) missing.push_back(sample_id(i));
  }
  require(missing.empty(), ErrorKind::kData,
          "teacher embeddings missing sample_ids: " + join_ids(missing));

  TeacherCache cache;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto id = sample_id(i);
    const Json& r = *by_id.at(id);
    const std::string where = "teacher embeddings for sample " + id;
    const VecD q = to_vec(r["q"], where + " q");
    const VecD p = to_vec(r["pos"], where + " pos");
    require(r["negs"].is_array(), ErrorKind::kData, where + ": 'negs' must be an array");
    require(r["negs"].size() == samples[i].hard_negatives.size(), ErrorKind::kData,
            where + ": expected " + std::to_string(samples[i].hard_negatives.size()) + " negatives");
    require(p.size() == q.size(), ErrorKind::kData, where + ": dimension mismatch");
    VecD row(static_cast<Eigen::Index>(r["negs"].size() + 1));
    row[0] = cosine_sim(q, p);
    for (std::size_t k = 0; k < r["negs"].size(); ++k) {
      const VecD n = to_vec(r["negs"][k], where + " negs");
      require(n.size() == q.size(), ErrorKind::kData, where + ": dimension mismatch");
      row[static_cast<Eigen::Index>(k + 1)] = cosine_sim(q, n);
    }
    cache.rows.emplace(id, std::move(row));
  }
  return cache;
}

Json to_json(const TeacherCache& cache) {
  Json rows = Json::object();
  // Numeric id order keeps the file readable for line-indexed ids.
  std::vector<std::string> ids;
  for (const auto& [id, _] : cache.rows) ids.push_back(id);
  std::stable_sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  for (const auto& id : ids) {
    const VecD& r = cache.rows.at(id);
    rows[id] = std::vector<double>(r.data(), r.data() + r.size());
  }
  Json j;
  j["rows"] = std::move(rows);
  return j;
}

TeacherCache teacher_cache_from_json(const Json& j) {
  require(j.is_object() && j.contains("rows") && j["rows"].is_object(), ErrorKind::kData,
          "teacher cache: expected {\"rows\": {...}}");
  TeacherCache c;
  for (auto it = j["rows"].begin(); it != j["rows"].end(); ++it) {
    c.rows.emplace(it.key(), to_vec(it.value(), "teacher cache row " + it.key()));
  }
  return c;
}

Json to_json(const StepLog& s) {
  Json j;
  j["step"] = s.step;
  j["loss"] = s.loss;
  j["cl"] = s.cl;
  j["kl"] = s.kl ? Json(*s.kl) : Json(nullptr);
  j["lr"] = s.lr;
  return j;
}

// Training -------------------------------------------------------------------

double scheduled_lr(double base_lr, int warmup_steps, std::int64_t step) {
  if (warmup_steps <= 0 || step >= warmup_steps) return base_lr;
  return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

std::int64_t stage_steps(const StageConfig& cfg, std::size_t sample_count) {
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  return static_cast<std::int64_t>((sample_count + bs - 1) / bs) * cfg.epochs;
}

namespace {

// Gradients are accumulated in this many fixed groups and summed in group
// order, so the result does not depend on the worker count.
constexpr std::size_t kReduceGroups = 8;

template <typename Scalar>
void add_into(EncoderParams<Scalar>& dst, const EncoderParams<Scalar>& src) {
  std::vector<const Mat<Scalar>*> s;
  src.for_each([&](const std::string&, const Mat<Scalar>& t) { s.push_back(&t); });
  std::size_t i = 0;
  dst.for_each([&](const std::string&, Mat<Scalar>& t) { t += *s[i++]; });
}

}  // namespace

template <typename Scalar>
ObjectiveValue batch_objective(const StageConfig& cfg, std::span<const TrainingSample> batch,
                               const BasicModel<Scalar>& model, const MatD* teacher_rows,
                               const MixingPlan& plan, EncoderParams<Scalar>* grads,
                               const FocalOverride* focal) {
  require(!batch.empty(), ErrorKind::kData, "empty training batch");
  const LossConfig loss = effective_loss(cfg);
  const bool pretrain = cfg.stage == Stage::kPretrain;
  const std::size_t m = pretrain ? 0 : batch.front().hard_negatives.size();
  for (const auto& s : batch) {
    require(pretrain || s.hard_negatives.size() == m, ErrorKind::kData,
            "ragged hard-negative counts in batch");
  }
  const std::size_t n = batch.size();

  // Text layout: queries, positives, then each sample's negatives in order.
  std::vector<std::string> texts;
  texts.reserve(n * (2 + m));
  for (const auto& s : batch) texts.push_back(query_text(s));
  for (const auto& s : batch) texts.push_back(passage_text(s, s.positive));
  for (const auto& s : batch) {
    for (std::size_t k = 0; k < m; ++k) texts.push_back(passage_text(s, s.hard_negatives[k]));
  }

  const Eigen::Index d = model.params.config.dim;
  std::vector<ForwardTrace<Scalar>> traces(grads ? texts.size() : 0);
  Mat<Scalar> pooled(static_cast<Eigen::Index>(texts.size()), d);
  parallel_for(texts.size(), [&](std::size_t t) {
    pooled.row(static_cast<Eigen::Index>(t)) =
        encode(model.tokenize(texts[t]), model.params, grads ? &traces[t] : nullptr).transpose();
  });

  const auto ni = static_cast<Eigen::Index>(n);
  EmbeddedBatch<Scalar> eb;
  eb.queries = pooled.topRows(ni);
  eb.positives = pooled.middleRows(ni, ni);
  eb.hard_negatives = pooled.bottomRows(ni * static_cast<Eigen::Index>(m));
  eb.negatives_per_sample = static_cast<int>(m);

  std::optional<BatchGradients<Scalar>> g;
  if (grads) g = eb.zeros_like();
  ObjectiveValue value;
  if (cfg.stage == Stage::kDistill) {
    require(teacher_rows != nullptr, ErrorKind::kConfig, "distill stage requires teacher scores");
    const Mat<Scalar> t = teacher_rows->cast<Scalar>();
    value = distill_objective(eb, t, loss, plan, g ? &*g : nullptr, focal);
  } else {
    value = contrastive_objective(eb, loss, plan, g ? &*g : nullptr, focal);
  }
  if (!grads) return value;

  Mat<Scalar> g_pooled(pooled.rows(), d);
  g_pooled.topRows(ni) = g->queries;
  g_pooled.middleRows(ni, ni) = g->positives;
  g_pooled.bottomRows(ni * static_cast<Eigen::Index>(m)) = g->hard_negatives;

  const std::size_t groups = std::min(kReduceGroups, texts.size());
  std::vector<EncoderParams<Scalar>> partial(groups, EncoderParams<Scalar>::zeros(model.params.config));
  parallel_for(groups, [&](std::size_t gi) {
    const std::size_t lo = texts.size() * gi / groups, hi = texts.size() * (gi + 1) / groups;
    for (std::size_t t = lo; t < hi; ++t) {
      const Vec<Scalar> gp = g_pooled.row(static_cast<Eigen::Index>(t)).transpose();
      encode_backward(traces[t], model.params, gp, partial[gi]);
    }
  });
  for (const auto& p : partial) add_into(*grads, p);
  return value;
}

template ObjectiveValue batch_objective<float>(const StageConfig&, std::span<const TrainingSample>,
                                               const BasicModel<float>&, const MatD*,
                                               const MixingPlan&, EncoderParams<float>*,
                                               const FocalOverride*);
template ObjectiveValue batch_objective<double>(const StageConfig&, std::span<const TrainingSample>,
                                                const BasicModel<double>&, const MatD*,
                                                const MixingPlan&, EncoderParams<double>*,
                                                const FocalOverride*);

double distill_kl(const Model& student, std::span<const TrainingSample> samples,
                  const TeacherCache& teacher, double tau) {
  teacher.check_coverage(samples);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < samples.size(); ++i) ids.push_back(sample_id(i));
  const MatD t = teacher.rows_for(ids);
  const auto b = assemble_batch(samples, student);
  EmbeddedBatch<double> bd{b.queries.cast<double>(), b.positives.cast<double>(),
                           b.hard_negatives.cast<double>(), b.negatives_per_sample};
  return kl_distill_loss(t, student_score_rows(bd), tau);
}

StageResult run_stage(const StageConfig& cfg, std::span<const TrainingSample> samples, Model model,
                      const TeacherCache* teacher,
                      const std::function<void(const StepLog&)>& on_step) {
  cfg.validate();
  require(!samples.empty(), ErrorKind::kData, "run_stage: no training samples");
  validate_samples(samples);
  if (cfg.stage == Stage::kDistill) {
    require(teacher != nullptr, ErrorKind::kConfig, "distill stage requires a teacher cache");
    teacher->check_coverage(samples);
  }
  if (cfg.batch_size == 1) {
    std::cerr << "warning: batch_size 1 leaves no in-batch negatives\n";
  }
  const LossConfig loss = effective_loss(cfg);
  loss.validate(model.params.config.dim);

  const std::int64_t total_steps = stage_steps(cfg, samples.size());
  const int warmup = cfg.warmup_steps ? *cfg.warmup_steps
                                      : static_cast<int>(total_steps / 10);

  SeededRng rng(cfg.seed);
  SeededRng order_rng = rng.split(1);
  SeededRng mix_rng = rng.split(2);
  auto state = OptimizerState<float>::for_params(model.params);
  auto grads = EncoderParams<float>::zeros(model.params.config);

  StageResult result{std::move(model), {}};
  std::vector<std::size_t> order(samples.size());
  std::int64_t step = 0;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, order_rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      ++step;
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<TrainingSample> batch;
      std::vector<std::string> ids;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(samples[order[i]]);
        ids.push_back(sample_id(order[i]));
      }
      const int m = cfg.stage == Stage::kPretrain
                        ? 0
                        : static_cast<int>(batch.front().hard_negatives.size());
      const MixingPlan plan = draw_mixing_plan(static_cast<int>(batch.size()), m, loss, mix_rng);
      std::optional<MatD> t_rows;
      if (cfg.stage == Stage::kDistill) t_rows = teacher->rows_for(ids);

      grads.set_zero();
      ObjectiveValue v;
      try {
        v = batch_objective<float>(cfg, batch, result.model, t_rows ? &*t_rows : nullptr, plan,
                                   &grads);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kNumeric) throw;
        raise(ErrorKind::kNumeric, "step " + std::to_string(step) + ": " + e.what());
      }
      require(std::isfinite(v.total), ErrorKind::kNumeric,
              "non-finite loss at step " + std::to_string(step));
      const double lr = scheduled_lr(cfg.learning_rate, warmup, step);
      try {
        adam_step(result.model.params, grads, state, lr);
      } catch (const Error& e) {
        raise(ErrorKind::kNumeric, "step " + std::to_string(step) + ": " + e.what());
      }
      StepLog log{step, v.total, v.contrastive, v.kl, lr};
      result.log.push_back(log);
      if (on_step) on_step(log);
    }
  }
  return result;
}

}  // namespace embforge
