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

#include <cmath>

#include "embforge/numerics.hpp"

using namespace embforge;

namespace {

VecD vec(std::initializer_list<double> v) {
  VecD out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

VecD random_vec(SeededRng& rng, int d) {
  VecD v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.uniform() * 2.0 - 1.0;
  return v;
}

}  // namespace

TEST_CASE("cosine_sim examples") {
  const VecD u = l2_normalize(vec({0.3, -0.4, 1.2}));
  CHECK(cosine_sim(u, u) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_sim(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine_sim(vec({1, 2}), vec({2, 1})) == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("cosine_sim errors") {
  CHECK_THROWS_AS(cosine_sim(vec({0, 0}), vec({1, 0})), Error);
  try {
    cosine_sim(vec({1, 0, 0}), vec({1, 0}));
    FAIL("expected dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
  }
}

TEST_CASE("cosine_sim is symmetric and scale invariant") {
  SeededRng rng(7);
  for (int t = 0; t < 200; ++t) {
    const VecD a = random_vec(rng, 5), b = random_vec(rng, 5);
    const double alpha = 0.01 + 100.0 * rng.uniform();
    CHECK(cosine_sim(a, b) == doctest::Approx(cosine_sim(b, a)).epsilon(1e-15));
    CHECK(std::abs(cosine_sim(VecD(alpha * a), b) - cosine_sim(a, b)) < 4e-16);
  }
}

TEST_CASE("l2_normalize") {
  const VecD n = l2_normalize(vec({3, 4}));
  CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-15));
  const VecD u = vec({0, 1, 0});
  CHECK(l2_normalize(u) == u);
  try {
    l2_normalize(vec({0, 0}));
    FAIL("expected domain error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDomain);
  }
  SeededRng rng(3);
  for (int t = 0; t < 200; ++t) {
    const VecD v = random_vec(rng, 7);
    const VecD once = l2_normalize(v);
    CHECK(std::abs(once.norm() - 1.0) < 1e-12);
    CHECK((l2_normalize(once) - once).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("softmax examples") {
  const VecD uni = softmax(vec({2.5, 2.5, 2.5, 2.5}), 0.3);
  for (int i = 0; i < 4; ++i) CHECK(uni[i] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(softmax(vec({-7.0}), 1.0)[0] == 1.0);
  const VecD p = softmax(vec({1, 0}), 1.0);
  const double e = std::exp(1.0);
  CHECK(std::abs(p[0] - e / (e + 1.0)) < 1e-15);
  CHECK(p[0] == doctest::Approx(0.73106).epsilon(1e-5));
  CHECK(p[1] == doctest::Approx(0.26894).epsilon(1e-5));
  CHECK_THROWS_AS(softmax(vec({1, 2}), 0.0), Error);
  CHECK_THROWS_AS(softmax(vec({1, 2}), -1.0), Error);
}

TEST_CASE("softmax is shift invariant and overflow safe") {
  SeededRng rng(11);
  for (int t = 0; t < 100; ++t) {
    const VecD z = random_vec(rng, 6) * 10.0;
    const double c = 500.0 * (rng.uniform() - 0.5);
    const VecD a = softmax(z, 0.7);
    const VecD b = softmax(VecD(z.array() + c), 0.7);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(a.sum() - 1.0) < 1e-12);
    CHECK(a.minCoeff() > 0.0);
  }
  const VecD big = softmax(vec({1e4, 1e4 - 1.0}), 1.0);
  CHECK(big.allFinite());
}

TEST_CASE("SeededRng determinism and splitting") {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
  SeededRng s1 = SeededRng(5).split(1), s2 = SeededRng(5).split(1), s3 = SeededRng(5).split(2);
  const auto v1 = s1.next_u64();
  CHECK(v1 == s2.next_u64());
  CHECK(v1 != s3.next_u64());
}

TEST_CASE("Beta(2,2) draws: support and moments") {
  SeededRng rng(2024);
  const int n = 100000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_beta_2_2(rng);
    REQUIRE(x > 0.0);
    REQUIRE(x < 1.0);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  // Beta(a,b): mean a/(a+b) = 0.5, variance ab/((a+b)^2 (a+b+1)) = 4/80.
  CHECK(std::abs(mean - 0.5) < 0.01);
  CHECK(std::abs(var - 0.05) < 0.005);

  SeededRng r1(9), r2(9);
  for (int i = 0; i < 100; ++i) CHECK(sample_beta_2_2(r1) == sample_beta_2_2(r2));
}

TEST_CASE("sample_without_replacement") {
  SeededRng rng(1);
  for (int t = 0; t < 100; ++t) {
    auto s = sample_without_replacement(10, 4, rng);
    REQUIRE(s.size() == 4);
    std::sort(s.begin(), s.end());
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    CHECK(s.back() < 10);
  }
  CHECK_THROWS_AS(sample_without_replacement(3, 4, rng), Error);
}

TEST_CASE("grad_check oracle") {
  SeededRng rng(17);
  const VecD x = random_vec(rng, 8);
  auto sq = [](const VecD& v) { return v.squaredNorm(); };
  CHECK(grad_check(sq, 2.0 * x, x, 1e-5) < 1e-8);

  const VecD c = random_vec(rng, 8);
  auto lin = [&](const VecD& v) { return c.dot(v); };
  CHECK(grad_check(lin, c, x, 1e-5) < 1e-10);

  CHECK(grad_check(sq, 2.1 * x, x, 1e-5) > 1e-2);

  auto bad = [](const VecD& v) { return v[0] > 0 ? std::nan("") : 0.0; };
  VecD pos = VecD::Ones(2);
  try {
    grad_check(bad, VecD::Zero(2), pos, 1e-5);
    FAIL("expected numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
  }
}
