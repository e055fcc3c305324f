// Copyright 2026 The spikedet Authors
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

#include "catch_amalgamated.hpp"
#include "spikedet/randmat.hpp"

using namespace spikedet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= v.size();
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= v.size() - 1;
  return m;
}

}  // namespace

TEST_CASE("haar_unitary is unitary and deterministic") {
  for (int p : {1, 2, 5, 12}) {
    const auto u = haar_unitary(p, std::uint64_t{42});
    CHECK((u.adjoint() * u - Eigen::MatrixXcd::Identity(p, p)).norm() <= 1e-10);
    const auto v = haar_unitary(p, std::uint64_t{42});
    CHECK(u == v);
  }
  const auto u1 = haar_unitary(1, std::uint64_t{3});
  CHECK_THAT(std::abs(u1(0, 0)), WithinAbs(1.0, 1e-14));
  CHECK(haar_unitary(3, std::uint64_t{1}) != haar_unitary(3, std::uint64_t{2}));
}

TEST_CASE("Haar phases of U(1) are uniform") {
  Rng rng = stream_rng(9, 0);
  const int draws = 20000;
  Complex mean{};
  for (int i = 0; i < draws; ++i) mean += haar_unitary(1, rng)(0, 0);
  mean /= static_cast<double>(draws);
  CHECK(std::abs(mean) <= 4.0 / std::sqrt(draws));
}

TEST_CASE("Haar second moment of a matrix entry") {
  Rng rng = stream_rng(17, 0);
  const int draws = 100000, p = 8;
  std::vector<double> v(draws);
  for (int i = 0; i < draws; ++i) v[i] = std::norm(haar_unitary(p, rng)(0, 0));
  const auto m = moments(v);
  CHECK(std::abs(m.mean - 1.0 / p) <= 3.0 * std::sqrt(m.var / draws));
  // E|U11|^4 = 2 / (p (p + 1)).
  double m4 = 0.0;
  for (double x : v) m4 += x * x;
  m4 /= draws;
  CHECK_THAT(m4, WithinRel(2.0 / (p * (p + 1.0)), 0.05));
}

TEST_CASE("haar_frame columns are orthonormal") {
  Rng rng = stream_rng(5, 1);
  const auto f = haar_frame(7, 3, rng);
  CHECK((f.adjoint() * f - Eigen::MatrixXcd::Identity(3, 3)).norm() <= 1e-12);
  CHECK_THROWS_AS(haar_frame(2, 3, rng), InvalidArgument);
}

TEST_CASE("Null linear statistics") {
  const int n = 200, reps = 1000;
  SpikeParams params;
  params.n = n;
  params.p = n;
  std::vector<double> s(reps), t(reps);
  parallel_for(reps, [&](std::size_t i) {
    const auto e = sample_spiked_eigs(params, 77, i);
    s[i] = e.S - n;
    t[i] = e.T - 2.0 * n;
  });
  const auto ms = moments(s), mt = moments(t);
  CHECK(std::abs(ms.mean) <= 3.0 * std::sqrt(ms.var / reps));
  CHECK_THAT(ms.var, WithinRel(1.0, 0.1));
  CHECK_THAT(mt.var, WithinRel(18.0, 0.15));
}

TEST_CASE("Spiked covariance is realised by the sampler") {
  // E S = tr(Sigma) = p + sum h.
  SpikeParams params;
  params.n = 50;
  params.p = 30;
  params.h = {2.0, 0.5};
  params.sigma2 = 1.5;
  const int reps = 2000;
  std::vector<double> s(reps);
  for (int i = 0; i < reps; ++i) s[i] = sample_spiked_eigs(params, 8, i).S;
  const auto m = moments(s);
  CHECK(std::abs(m.mean - 1.5 * (30 + 2.5)) <= 3.0 * std::sqrt(m.var / reps));
}

TEST_CASE("Null spectrum follows the Marchenko-Pastur law") {
  SpikeParams params;
  params.n = 1000;
  params.p = 1000;
  const auto e = sample_spiked_eigs(params, 2024);
  const MPLaw law(1.0);
  double d = 0.0;
  const int m = e.m();
  for (int i = 0; i < m; ++i) {
    const double x = e.lambda[m - 1 - i];
    const double f = mp_cdf(law, x);
    d = std::max({d, std::abs(f - static_cast<double>(i) / m), std::abs(f - static_cast<double>(i + 1) / m)});
  }
  CHECK(d <= 0.05);
}

TEST_CASE("Wide data pads through the small Gram matrix") {
  SpikeParams params;
  params.n = 20;
  params.p = 50;
  const auto e = sample_spiked_eigs(params, 3);
  CHECK(e.m() == 20);
  CHECK(e.p == 50);
  CHECK(e.lambda.back() > 0.0);
}

TEST_CASE("Eigenvalue law does not depend on the spike frame") {
  const int reps = 2000;
  SpikeParams fixed;
  fixed.n = 20;
  fixed.p = 20;
  fixed.h = {1.5};
  Eigen::MatrixXcd e1 = Eigen::MatrixXcd::Zero(20, 1);
  e1(0, 0) = 1.0;
  fixed.V = e1;
  SpikeParams random = fixed;
  random.V.reset();
  std::vector<double> a(reps), b(reps);
  for (int i = 0; i < reps; ++i) {
    a[i] = sample_spiked_eigs(fixed, 100, i).lambda[0];
    b[i] = sample_spiked_eigs(random, 200, i).lambda[0];
  }
  CHECK(ks_two_sample(a, b) <= 0.05);
}

TEST_CASE("SpikeParams validation") {
  SpikeParams p;
  p.n = 5;
  p.p = 2;
  p.h = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.h = {-1.0};
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
  p.h = {1.0};
  p.V = Eigen::MatrixXcd::Ones(2, 1);
  CHECK_THROWS_AS(p.validate(), InvalidArgument);
}

TEST_CASE("normalized_eigs examples") {
  const EigenSample s({2.0, 1.0, 1.0}, 3, 3);
  const auto mu = normalized_eigs(s);
  REQUIRE(mu.size() == 2);
  CHECK(mu[0] == 0.5);
  CHECK(mu[1] == 0.25);
  const EigenSample scaled({14.0, 7.0, 7.0}, 3, 3);
  CHECK(normalized_eigs(scaled) == mu);
  CHECK(normalized_eigs(EigenSample({3.0}, 1, 1)).empty());
  CHECK_THROWS_AS(normalized_eigs(EigenSample({0.0, 0.0}, 2, 2)), InvalidArgument);
}
