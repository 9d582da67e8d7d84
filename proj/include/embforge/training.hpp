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
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embforge/adam.hpp"
#include "embforge/data.hpp"
#include "embforge/io.hpp"
#include "embforge/model.hpp"
#include "embforge/objectives.hpp"

namespace embforge {

enum class Stage { kPretrain, kFinetune, kDistill };

const char* to_string(Stage s);
Stage parse_stage(const std::string& s);

struct StageConfig {
  Stage stage = Stage::kPretrain;
  int batch_size = 32;
  double learning_rate = 1e-4;
  /// Linear warm-up length; unset means 10% of the stage's steps.
  std::optional<int> warmup_steps;
  int epochs = 1;
  LossConfig loss;
  std::uint64_t seed = 0;

  void validate() const;
  /// Desk-scale defaults per stage (batch 32/16/16, warm-up 10%/200/200).
  static StageConfig defaults(Stage stage);
};

StageConfig stage_config_from_json(const Json& j);
Json to_json(const StageConfig& cfg);
Json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const Json& j, LossConfig base = {});

/// Cached teacher similarity rows [s(q,p+), s(q,n_1), ..., s(q,n_M)] keyed by
/// sample id (the sample's 0-based position in its training file).
struct TeacherCache {
  std::map<std::string, VecD> rows;

  /// Rows for the given sample ids, stacked; missing ids raise a data error
  /// listing every gap.
  MatD rows_for(std::span<const std::string> ids) const;
  /// Checks every sample has a row of width 1 + M.
  void check_coverage(std::span<const TrainingSample> samples) const;
};

std::string sample_id(std::size_t index);

/// Teacher rows from a frozen encoder of this library (any size).
TeacherCache build_teacher_cache(const Model& teacher, std::span<const TrainingSample> samples);

/// Teacher rows from precomputed embeddings:
/// {"sample_id": str, "q": [f], "pos": [f], "negs": [[f]]}.
TeacherCache build_teacher_cache(std::span<const Json> embedding_records,
                                 std::span<const TrainingSample> samples);

Json to_json(const TeacherCache& cache);
TeacherCache teacher_cache_from_json(const Json& j);

struct StepLog {
  std::int64_t step = 0;
  double loss = 0;
  double cl = 0;
  std::optional<double> kl;
  double lr = 0;
};

Json to_json(const StepLog& s);

struct StageResult {
  Model model;
  std::vector<StepLog> log;
};

/// Learning rate at 1-based `step`: linear warm-up then constant.
double scheduled_lr(double base_lr, int warmup_steps, std::int64_t step);

/// Number of optimizer steps the stage will take over `sample_count` samples.
std::int64_t stage_steps(const StageConfig& cfg, std::size_t sample_count);

/// Trains `model` for one stage. Pretraining drops hard negatives and uses
/// plain InfoNCE; fine-tuning uses the focal, mixed objective; distillation
/// blends it with KL against `teacher`. `on_step` sees every logged step.
StageResult run_stage(const StageConfig& cfg, std::span<const TrainingSample> samples, Model model,
                      const TeacherCache* teacher = nullptr,
                      const std::function<void(const StepLog&)>& on_step = {});

/// Loss and encoder gradient for one batch at the stage's objective, in any
/// precision. `plan` fixes the mixing draws; `focal` optionally freezes the
/// focal weights.
template <typename Scalar>
ObjectiveValue batch_objective(const StageConfig& cfg, std::span<const TrainingSample> batch,
                               const BasicModel<Scalar>& model, const MatD* teacher_rows,
                               const MixingPlan& plan, EncoderParams<Scalar>* grads,
                               const FocalOverride* focal = nullptr);

/// Mean KL(teacher || student) over `samples` at temperature `tau`, on full
/// embeddings.
double distill_kl(const Model& student, std::span<const TrainingSample> samples,
                  const TeacherCache& teacher, double tau);

/// The loss config a stage actually optimizes (pretraining forces M = 0,
/// no mixing and gamma = 0).
LossConfig effective_loss(const StageConfig& cfg);

}  // namespace embforge
