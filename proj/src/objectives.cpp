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

#include "embforge/objectives.hpp"

namespace embforge {

void LossConfig::validate(int dim) const {
  require(tau_cl > 0.0 && tau_kl > 0.0, ErrorKind::kConfig, "loss: temperatures must be positive");
  require(gamma >= 0.0, ErrorKind::kConfig, "loss: gamma must be >= 0");
  require(mrl_dims.size() == mrl_weights.size(), ErrorKind::kConfig,
          "loss: mrl_dims and mrl_weights differ in length");
  for (std::size_t i = 0; i < mrl_dims.size(); ++i) {
    require(mrl_dims[i] >= 1, ErrorKind::kConfig, "loss: mrl dims must be >= 1");
    require(dim <= 0 || mrl_dims[i] <= dim, ErrorKind::kConfig,
            "loss: mrl dim " + std::to_string(mrl_dims[i]) + " exceeds embedding size " + std::to_string(dim));
    require(i == 0 || mrl_dims[i] < mrl_dims[i - 1], ErrorKind::kConfig,
            "loss: mrl dims must be strictly descending");
    require(mrl_weights[i] > 0.0, ErrorKind::kConfig, "loss: mrl weights must be positive");
  }
  require(cl_weight >= 0.0 && kl_weight >= 0.0, ErrorKind::kConfig, "loss: blend weights must be >= 0");
}

std::vector<int> LossConfig::resolved_dims(int dim) const {
  return mrl_dims.empty() ? std::vector<int>{dim} : mrl_dims;
}

std::vector<double> LossConfig::resolved_weights() const {
  return mrl_dims.empty() ? std::vector<double>{1.0} : mrl_weights;
}

MixingPlan draw_mixing_plan(int batch_size, int negatives_per_sample, const LossConfig& cfg,
                            SeededRng& rng) {
  MixingPlan plan;
  if (cfg.enable_pairwise_mix) {
    require(negatives_per_sample >= 2, ErrorKind::kConfig, "pair-wise mixing requires M >= 2");
    plan.pairwise.resize(static_cast<std::size_t>(batch_size));
    for (auto& slot : plan.pairwise) {
      const auto idx = sample_without_replacement(static_cast<std::size_t>(negatives_per_sample), 2, rng);
      slot = MixingPlan::Pair{static_cast<int>(idx[0]), static_cast<int>(idx[1]), sample_beta_2_2(rng)};
    }
  }
  if (cfg.enable_listwise_mix) {
    require(negatives_per_sample >= 1, ErrorKind::kConfig, "list-wise mixing requires M >= 1");
    plan.listwise = true;
  }
  return plan;
}

ObjectiveProbe& objective_probe() {
  static ObjectiveProbe probe;
  return probe;
}

std::vector<double> focal_weights(std::span<const double> positive_probs, double gamma) {
  require(gamma >= 0.0, ErrorKind::kConfig, "focal_weights: gamma must be >= 0");
  std::vector<double> w;
  w.reserve(positive_probs.size());
  for (double p : positive_probs) {
    require(p > 0.0 && p <= 1.0, ErrorKind::kDomain, "focal_weights: probability outside (0,1]");
    w.push_back(std::pow(1.0 - p, gamma));
  }
  return w;
}

}  // namespace embforge
