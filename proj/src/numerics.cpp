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

#include "embforge/numerics.hpp"

#include <algorithm>
#include <numeric>

namespace embforge {
namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() {
  // 53-bit mantissa, shifted by half an ulp so 0 is never produced.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::size_t SeededRng::uniform_index(std::size_t n) {
  require(n > 0, ErrorKind::kConfig, "uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

double SeededRng::exponential() { return -std::log(uniform()); }

SeededRng SeededRng::split(std::uint64_t stream) const {
  std::uint64_t x = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return SeededRng(splitmix64(x));
}

double sample_beta_2_2(SeededRng& rng) {
  const double x = rng.exponential() + rng.exponential();
  const double y = rng.exponential() + rng.exponential();
  return x / (x + y);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k,
                                                    SeededRng& rng) {
  require(k <= n, ErrorKind::kData,
          "cannot sample " + std::to_string(k) + " of " + std::to_string(n) +
              " without replacement");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots are the sample.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

double grad_check(const std::function<double(const VecD&)>& loss,
                  const VecD& analytic_grad, const VecD& params, double h) {
  require(analytic_grad.size() == params.size(), ErrorKind::kDimension,
          "grad_check: gradient and parameter sizes differ");
  require(h > 0.0, ErrorKind::kConfig, "grad_check: step must be positive");
  VecD x = params;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = loss(x);
    x[i] = orig - h;
    const double fm = loss(x);
    x[i] = orig;
    require(std::isfinite(fp) && std::isfinite(fm), ErrorKind::kNumeric,
            "grad_check: non-finite loss at coordinate " + std::to_string(i));
    const double central = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic_grad[i] - central) / std::max(1.0, std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace embforge
