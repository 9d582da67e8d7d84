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

#include <cmath>
#include <cstdint>
#include <string>

#include "embforge/encoder.hpp"
#include "embforge/error.hpp"
#include "embforge/numerics.hpp"

namespace embforge {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of `param` in place. `step` is the 1-based
/// index of this update.
template <typename DP, typename DG, typename DM, typename DV>
void adam_update(Eigen::MatrixBase<DP>& param, const Eigen::MatrixBase<DG>& grad,
                 Eigen::MatrixBase<DM>& m, Eigen::MatrixBase<DV>& v, std::int64_t step, double lr,
                 const AdamHyper& h = {}) {
  using Scalar = typename DP::Scalar;
  const Scalar b1 = static_cast<Scalar>(h.beta1), b2 = static_cast<Scalar>(h.beta2);
  m = b1 * m + (Scalar(1) - b1) * grad;
  v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  const Scalar step_size = static_cast<Scalar>(lr / c1);
  const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
  const Scalar eps = static_cast<Scalar>(h.eps);
  param -= (step_size * m.array() / ((v.array() * inv_c2).sqrt() + eps)).matrix();
}

/// First/second moment accumulators shaped like the encoder parameters.
template <typename Scalar>
struct OptimizerState {
  EncoderParams<Scalar> first_moment;
  EncoderParams<Scalar> second_moment;
  std::int64_t step = 0;
  AdamHyper hyper;

  static OptimizerState for_params(const EncoderParams<Scalar>& params, AdamHyper h = {}) {
    return OptimizerState{EncoderParams<Scalar>::zeros(params.config),
                          EncoderParams<Scalar>::zeros(params.config), 0, h};
  }
};

/// Adam over every encoder tensor. A non-finite gradient aborts the step
/// before anything is modified.
template <typename Scalar>
void adam_step(EncoderParams<Scalar>& params, const EncoderParams<Scalar>& grads,
               OptimizerState<Scalar>& state, double lr) {
  std::string bad;
  grads.for_each([&](const std::string& name, const Mat<Scalar>& g) {
    if (bad.empty() && !g.allFinite()) bad = name;
  });
  require(bad.empty(), ErrorKind::kNumeric, "adam_step: non-finite gradient in " + bad);
  ++state.step;
  std::vector<Mat<Scalar>*> g_list, m_list, v_list;
  const_cast<EncoderParams<Scalar>&>(grads).for_each(
      [&](const std::string&, Mat<Scalar>& t) { g_list.push_back(&t); });
  state.first_moment.for_each([&](const std::string&, Mat<Scalar>& t) { m_list.push_back(&t); });
  state.second_moment.for_each([&](const std::string&, Mat<Scalar>& t) { v_list.push_back(&t); });
  std::size_t i = 0;
  params.for_each([&](const std::string&, Mat<Scalar>& p) {
    adam_update(p, *g_list[i], *m_list[i], *v_list[i], state.step, lr, state.hyper);
    ++i;
  });
}

}  // namespace embforge
