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

// Test-only reference computations. Written with explicit loops and direct
// exponentiation so they share no code path with the library objectives.
#pragma once

#include <cmath>
#include <vector>

#include "embforge/numerics.hpp"
#include "embforge/objectives.hpp"

namespace embforge::oracle {

inline double dot(const VecD& a, const VecD& b) {
  double s = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cos(const VecD& a, const VecD& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

inline VecD unit(const VecD& v) {
  VecD out = v;
  const double n = std::sqrt(dot(v, v));
  for (Eigen::Index i = 0; i < v.size(); ++i) out[i] /= n;
  return out;
}

inline VecD row(const MatD& m, Eigen::Index r) { return m.row(r).transpose(); }

/// Materializes every denominator term of the focal, mixed contrastive loss.
inline double contrastive(const EmbeddedBatch<double>& b, double tau, double gamma,
                          const MixingPlan& plan, std::vector<double>* probs = nullptr) {
  const int n = b.size(), m = b.negatives_per_sample;
  std::vector<VecD> synthetic;
  for (int j = 0; j < n; ++j) {
    if (plan.pairwise.empty() || !plan.pairwise[j]) continue;
    const auto& pr = *plan.pairwise[j];
    const VecD a = unit(row(b.hard_negatives, j * m + pr.first));
    const VecD c = unit(row(b.hard_negatives, j * m + pr.second));
    VecD mix(a.size());
    for (Eigen::Index t = 0; t < a.size(); ++t) mix[t] = pr.lambda * a[t] + (1.0 - pr.lambda) * c[t];
    synthetic.push_back(unit(mix));
  }
  for (int j = 0; j < n && plan.listwise; ++j) {
    std::vector<double> e(m);
    double z = 0;
    for (int k = 0; k < m; ++k) {
      e[k] = std::exp(cos(row(b.queries, j), row(b.hard_negatives, j * m + k)));
      z += e[k];
    }
    VecD mix = VecD::Zero(b.dim());
    for (int k = 0; k < m; ++k) {
      const VecD nk = unit(row(b.hard_negatives, j * m + k));
      for (Eigen::Index t = 0; t < mix.size(); ++t) mix[t] += e[k] / z * nk[t];
    }
    synthetic.push_back(unit(mix));
  }
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const VecD qi = row(b.queries, i);
    const double pos = std::exp(cos(qi, row(b.positives, i)) / tau);
    double z = pos;
    for (int j = 0; j < n; ++j) {
      if (j != i) z += std::exp(cos(qi, row(b.positives, j)) / tau);
    }
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < m; ++k) z += std::exp(cos(qi, row(b.hard_negatives, j * m + k)) / tau);
    }
    for (const auto& s : synthetic) z += std::exp(cos(qi, s) / tau);
    const double p = pos / z;
    if (probs) probs->push_back(p);
    total += -std::pow(1.0 - p, gamma) * std::log(p);
  }
  return total / n;
}

inline double kl(const MatD& teacher, const MatD& student, double tau) {
  double total = 0;
  for (Eigen::Index r = 0; r < teacher.rows(); ++r) {
    double zt = 0, zs = 0;
    for (Eigen::Index c = 0; c < teacher.cols(); ++c) {
      zt += std::exp(teacher(r, c) / tau);
      zs += std::exp(student(r, c) / tau);
    }
    for (Eigen::Index c = 0; c < teacher.cols(); ++c) {
      const double pt = std::exp(teacher(r, c) / tau) / zt;
      const double ps = std::exp(student(r, c) / tau) / zs;
      total += pt * std::log(pt / ps);
    }
  }
  return total / teacher.rows();
}

/// Random batch with entries uniform in [-1, 1].
inline EmbeddedBatch<double> random_batch(SeededRng& rng, int n, int m, int d) {
  auto fill = [&](Eigen::Index rows) {
    MatD x(rows, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * rng.uniform() - 1.0;
    return x;
  };
  EmbeddedBatch<double> b;
  b.queries = fill(n);
  b.positives = fill(n);
  b.hard_negatives = fill(static_cast<Eigen::Index>(n) * m);
  b.negatives_per_sample = m;
  return b;
}

inline VecD flatten(const EmbeddedBatch<double>& b) {
  VecD out(b.queries.size() + b.positives.size() + b.hard_negatives.size());
  out << Eigen::Map<const VecD>(b.queries.data(), b.queries.size()),
      Eigen::Map<const VecD>(b.positives.data(), b.positives.size()),
      Eigen::Map<const VecD>(b.hard_negatives.data(), b.hard_negatives.size());
  return out;
}

inline EmbeddedBatch<double> unflatten(const VecD& flat, const EmbeddedBatch<double>& shape) {
  EmbeddedBatch<double> b = shape;
  Eigen::Index off = 0;
  for (MatD* t : {&b.queries, &b.positives, &b.hard_negatives}) {
    Eigen::Map<VecD>(t->data(), t->size()) = flat.segment(off, t->size());
    off += t->size();
  }
  return b;
}

}  // namespace embforge::oracle
