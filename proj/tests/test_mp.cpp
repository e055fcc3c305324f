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
#include "spikedet/mp.hpp"
#include "spikedet/randmat.hpp"

using namespace spikedet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("mp_density examples") {
  const MPLaw law(1.0);
  CHECK_THAT(mp_density(law, 2.0), WithinRel(1.0 / (2.0 * kPi), 1e-14));
  CHECK(mp_density(law, 5.0) == 0.0);
  CHECK(mp_density(MPLaw(0.25), 0.1) == 0.0);
  CHECK_THROWS_AS(MPLaw(0.0), InvalidArgument);
}

TEST_CASE("Marchenko-Pastur mass plus atom is one") {
  for (double c : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const MPLaw law(c);
    CHECK_THAT(mp_continuous_mass(law) + law.atom(), WithinAbs(1.0, 1e-10));
    CHECK_THAT(mp_cdf(law, law.upper()), WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("mp_log_potential examples") {
  // Saddle identity at h = 0.5, c = 1, and high-precision quadrature values.
  CHECK_THAT(mp_log_potential(MPLaw(1.0), 4.5).real(), WithinAbs(1.193147180559941525, 1e-10));
  CHECK_THAT(mp_log_potential(MPLaw(0.5), 4.0).real(), WithinAbs(1.064748843849961040, 1e-10));
  const Complex v = mp_log_potential(MPLaw(2.0), {7.0, 1.0});
  CHECK(std::abs(v - Complex{1.770930215377766260, 0.181031943460102292}) <= 1e-10);
  const Complex w = mp_log_potential(MPLaw(0.25), {-1.0, 0.5});
  CHECK(std::abs(w - Complex{0.698309795476929009, 2.882974686484851137}) <= 1e-10);

  CHECK(std::abs(mp_log_potential(MPLaw(0.5), 6.0).imag()) <= 1e-15);

  for (double c : {0.5, 1.0, 3.0}) {
    const double z = 1e3;
    const Complex lp = mp_log_potential(MPLaw(c), z);
    // ln z - E(lambda)/z - E(lambda^2)/(2 z^2) + O(z^-3), E lambda = 1, E lambda^2 = 1 + c.
    CHECK_THAT(lp.real(), WithinAbs(std::log(z) - 1.0 / z - (1.0 + c) / (2.0 * z * z), 1e-8));
  }
  CHECK_THROWS_AS(mp_log_potential(MPLaw(1.0), 2.0), DegenerateArgument);
  CHECK_THROWS_AS(mp_log_potential(MPLaw(2.0), Complex{0.0, 1e-12}), DegenerateArgument);
}

TEST_CASE("Log potential derivative is the Stieltjes transform") {
  for (double c : {0.25, 1.0, 2.0}) {
    const MPLaw law(c);
    for (Complex z : {Complex{6.0, 0.0}, Complex{2.0, 1.0}, Complex{-1.0, -0.5}, Complex{0.5, 3.0}}) {
      const double h = 1e-5;
      const Complex fd = (mp_log_potential(law, z + h) - mp_log_potential(law, z - h)) / (2.0 * h);
      const Complex st = mp_stieltjes(law, z);
      INFO("c=" << c << " z=" << z);
      CHECK(std::abs(fd - st) <= 1e-6);
      CHECK(std::abs(st - mp_stieltjes_closed_form(law, z)) <= 1e-10);
    }
  }
}

TEST_CASE("delta_p examples") {
  const EigenSample one({1.0}, 1, 1);
  const MPLaw law(1.0);
  CHECK(std::abs(delta_p(one, law, 5.0) - (std::log(4.0) - mp_log_potential(law, 5.0))) <= 1e-14);
  // z = 3 lies inside the support [0, 4] of the c = 1 law.
  CHECK_THROWS_AS(delta_p(one, law, 3.0), DegenerateArgument);
  CHECK_THROWS_AS(delta_p(one, law, 1.0), DegenerateArgument);
}

TEST_CASE("delta_p is additive in single eigenvalues") {
  EigenSample s({3.0, 2.0, 1.0, 0.5}, 8, 4);
  const MPLaw law = MPLaw::from_dimensions(8, 4);
  const Complex z{5.0, 0.5};
  const Complex before = delta_p(s, law, z);
  EigenSample moved({3.0, 2.5, 1.0, 0.5}, 8, 4);
  const Complex after = delta_p(moved, law, z);
  CHECK(std::abs((after - before) - (std::log(z - 2.5) - std::log(z - 2.0))) <= 1e-12);
}

TEST_CASE("delta_p includes structural zeros when p exceeds n") {
  EigenSample s({4.0, 1.0}, 2, 5);
  const MPLaw law = MPLaw::from_dimensions(2, 5);
  const Complex z{9.0, 0.0};
  const Complex expect = std::log(z - 4.0) + std::log(z - 1.0) + 3.0 * std::log(z) - 5.0 * mp_log_potential(law, z);
  CHECK(std::abs(delta_p(s, law, z) - expect) <= 1e-12);
}

TEST_CASE("delta_p vanishes on quantile-matched samples") {
  double prev = 1e9;
  for (int p : {50, 200, 800}) {
    const auto s = mp_quantile_sample(p, p);
    const double d = std::abs(delta_p(s, MPLaw(1.0), 4.5));
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 0.01);
}

TEST_CASE("EigenSample bookkeeping") {
  const EigenSample s({1.0, 3.0, 2.0}, 3, 3);
  CHECK(s.lambda.front() == 3.0);
  CHECK(s.S == 6.0);
  CHECK(s.T == 14.0);
  CHECK_THROWS_AS(EigenSample({1.0, -1.0}, 2, 2), InvalidArgument);
  CHECK_THROWS_AS(EigenSample({1.0}, 2, 2), InvalidArgument);
}

TEST_CASE("Null variance of delta_p at a saddle point") {
  // n = p = 300, z at the saddle of h = 0.4: variance near -ln(1 - h^2).
  const int n = 300, reps = 500;
  const double h = 0.4, z = 1.4 * 1.4 / 0.4;
  const MPLaw law(1.0);
  const Complex lp = mp_log_potential(law, z);
  SpikeParams params;
  params.n = n;
  params.p = n;
  std::vector<double> vals(reps);
  parallel_for(reps, [&](std::size_t i) {
    const auto s = sample_spiked_eigs(params, 1234, i);
    vals[i] = delta_p_with_potential(s, lp, z).real();
  });
  double mean = 0.0, var = 0.0;
  for (double v : vals) mean += v;
  mean /= reps;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= reps - 1;
  CHECK_THAT(var, WithinRel(-std::log(1.0 - h * h), 0.15));
}
