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

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "embforge/error.hpp"

namespace embforge {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Row-major so that each embedding (row) is contiguous.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VecD = Vec<double>;
using MatD = Mat<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.allFinite();
}

template <typename DA, typename DB>
typename DA::Scalar cosine_sim(const Eigen::MatrixBase<DA>& a,
                               const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DA::Scalar;
  require(a.size() == b.size(), ErrorKind::kDimension,
          "cosine_sim: dimension mismatch " + std::to_string(a.size()) + " vs " +
              std::to_string(b.size()));
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  require(na > Scalar(0) && nb > Scalar(0), ErrorKind::kDomain,
          "cosine_sim: zero-norm input");
  return a.dot(b) / (na * nb);
}

template <typename Derived>
Vec<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  const Scalar n = v.norm();
  require(n > Scalar(0), ErrorKind::kDomain, "l2_normalize: zero vector");
  return v / n;
}

/// Normalizes every row of `m` in place. Zero rows raise a domain error.
template <typename Scalar>
void normalize_rows(Mat<Scalar>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar n = m.row(r).norm();
    require(n > Scalar(0), ErrorKind::kDomain,
            "normalize_rows: zero row " + std::to_string(r));
    m.row(r) /= n;
  }
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const Scalar mx = z.maxCoeff();
  return mx + std::log((z.array() - mx).exp().sum());
}

/// Temperature softmax `exp(z/tau) / sum exp(z/tau)` with max subtraction.
template <typename Derived>
Vec<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z,
                                      typename Derived::Scalar tau) {
  using Scalar = typename Derived::Scalar;
  require(tau > Scalar(0), ErrorKind::kConfig, "softmax: temperature must be positive");
  require(z.size() > 0, ErrorKind::kInput, "softmax: empty logits");
  require(z.allFinite(), ErrorKind::kNumeric, "softmax: non-finite logits");
  Vec<Scalar> scaled = z / tau;
  const Scalar mx = scaled.maxCoeff();
  Vec<Scalar> e = (scaled.array() - mx).exp().matrix();
  return e / e.sum();
}

/// Deterministic 64-bit generator (xoshiro256**) seeded through splitmix64.
/// All derived draws are computed here rather than through <random>
/// distributions so sequences are identical across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  /// Exponential(1).
  double exponential();
  /// Independent generator for a named sub-stream.
  SeededRng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

/// lambda ~ Beta(2, 2) as X / (X + Y) with X, Y ~ Gamma(2, 1), each a sum of
/// two Exponential(1) draws.
double sample_beta_2_2(SeededRng& rng);

/// k distinct indices from [0, n), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    SeededRng& rng);

template <typename T>
void shuffle(std::vector<T>& items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(items[i - 1], items[j]);
  }
}

/// Max over coordinates of |analytic - central| / max(1, |central|), where
/// central is the central difference of `loss` at `params` with step `h`.
double grad_check(const std::function<double(const VecD&)>& loss,
                  const VecD& analytic_grad, const VecD& params, double h = 1e-5);

}  // namespace embforge
