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

#include <random>

#include "catch_amalgamated.hpp"
#include "spikedet/partitions.hpp"

using namespace spikedet;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Spectrum real_spectrum(std::initializer_list<double> v) {
  Spectrum s;
  for (double x : v) s.emplace_back(x, 0.0);
  return s;
}

}  // namespace

TEST_CASE("enumerate_partitions lists each partition once in reverse-lex order") {
  const auto p4 = enumerate_partitions(4, 4);
  REQUIRE(p4.size() == 5);
  CHECK(p4[0] == Partition{4});
  CHECK(p4[1] == Partition{3, 1});
  CHECK(p4[2] == Partition{2, 2});
  CHECK(p4[3] == Partition{2, 1, 1});
  CHECK(p4[4] == Partition{1, 1, 1, 1});

  const auto p0 = enumerate_partitions(0, 3);
  REQUIRE(p0.size() == 1);
  CHECK(p0[0].length() == 0);

  const auto p6 = enumerate_partitions(6, 2);
  REQUIRE(p6.size() == 4);
  CHECK(p6[3] == Partition{3, 3});

  // Partition numbers.
  const int counts[] = {1, 1, 2, 3, 5, 7, 11, 15, 22, 30, 42};
  for (int k = 0; k <= 10; ++k) CHECK(enumerate_partitions(k, k + 1).size() == counts[k]);
  CHECK_THROWS_AS(enumerate_partitions(-1, 2), InvalidArgument);
}

TEST_CASE("Partition rejects malformed parts") {
  CHECK_THROWS_AS(Partition({1, 2}), InvalidArgument);
  CHECK_THROWS_AS(Partition({2, 0}), InvalidArgument);
  const Partition k{4, 3, 3, 1, 1};
  CHECK(k.weight() == 12);
  CHECK(k.length() == 5);
  CHECK(k.column(0) == 5);
  CHECK(k.column(1) == 3);
  CHECK(k.column(3) == 1);
}

TEST_CASE("FerrersStats arms and legs") {
  const Partition k{4, 3, 3, 1, 1};
  const auto st = FerrersStats::compute(k, 1.5);
  std::size_t s = 0;
  for (int i = 0; i < k.length(); ++i) {
    for (int j = 0; j < k[i]; ++j, ++s) {
      CHECK(st.arm[s] + st.coarm[s] + 1 == k[i]);
      CHECK(st.leg[s] + st.coleg[s] + 1 == k.column(j));
    }
  }
  CHECK(st.w > 0.0);
  CHECK_THAT(st.w, WithinRel(st.c * st.c_prime, 1e-14));
  CHECK_THROWS_AS(FerrersStats::compute(k, 0.0), InvalidArgument);
}

TEST_CASE("jack_C examples") {
  const auto x = real_spectrum({2.0, 3.0});
  CHECK_THAT(jack_C(Partition{1}, 1.0, x).real(), WithinRel(5.0, 1e-14));

  const auto ones = real_spectrum({1.0, 1.0, 1.0});
  CHECK_THAT(jack_C(Partition{2, 1}, 1.0, ones).real(), WithinRel(jack_C_identity(Partition{2, 1}, 1.0, 3), 1e-12));

  // C_[2] = m_2 + 2/(1+alpha) m_11 in two variables.
  const auto y = real_spectrum({0.4, 0.7});
  const double c2 = jack_C(Partition{2}, 2.0, y).real();
  const double c11 = jack_C(Partition{1, 1}, 2.0, y).real();
  CHECK_THAT(c2, WithinRel(0.65 + 2.0 / 3.0 * 0.28, 1e-13));
  CHECK_THAT(c2 + c11, WithinRel(1.21, 1e-13));

  CHECK(jack_C(Partition{1, 1, 1}, 1.0, y) == Complex{});
  CHECK_THROWS_AS(jack_C(Partition{1}, -1.0, y), InvalidArgument);
}

TEST_CASE("jack_C_identity examples") {
  CHECK_THAT(jack_C_identity(Partition{1}, 1.0, 7), WithinRel(7.0, 1e-14));
  CHECK(jack_C_identity(Partition{1, 1, 1}, 1.0, 2) == 0.0);
  const auto ones = real_spectrum({1.0, 1.0, 1.0});
  CHECK_THAT(jack_C(Partition{2}, 2.0, ones).real(), WithinRel(jack_C_identity(Partition{2}, 2.0, 3), 1e-12));
  CHECK_THROWS_AS(jack_C_identity(Partition{1}, 0.0, 2), InvalidArgument);
}

TEST_CASE("Partition sums reproduce powers of the trace") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (int p = 1; p <= 4; ++p) {
      Spectrum x(p);
      for (auto& v : x) v = Complex{g(rng), g(rng)};
      Complex trace{};
      for (auto v : x) trace += v;
      auto basis = jack_basis(alpha, 6, p);
      const auto c = basis->evaluate(x);
      for (int k = 0; k <= 6; ++k) {
        Complex sum{};
        for (int i = basis->degree_begin(k); i < basis->degree_begin(k + 1); ++i) sum += c[i];
        const Complex expect = std::pow(trace, k);
        INFO("alpha=" << alpha << " p=" << p << " k=" << k);
        CHECK(std::abs(sum - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
      }
    }
  }
}

TEST_CASE("Identity argument matches the closed form") {
  for (double alpha : {0.5, 1.0, 2.0, 3.0}) {
    for (int m = 1; m <= 4; ++m) {
      const Spectrum ones(m, Complex{1.0, 0.0});
      auto basis = jack_basis(alpha, 7, m);
      const auto c = basis->evaluate(ones);
      for (std::size_t i = 0; i < c.size(); ++i) {
        const double expect = jack_C_identity(basis->partitions()[i], alpha, m);
        CHECK(std::abs(c[i].real() - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
        CHECK(std::abs(c[i].imag()) <= 1e-12);
      }
    }
  }
}

TEST_CASE("f00_series examples") {
  const auto zero = real_spectrum({0.0, 0.0, 0.0});
  const auto any = real_spectrum({0.3, -1.2, 2.0});
  CHECK_THAT(f00_series(1.0, zero, any).value.real(), WithinAbs(1.0, 1e-15));

  const auto r = f00_series(1.0, real_spectrum({0.3}), real_spectrum({0.2}));
  CHECK_THAT(r.value.real(), WithinRel(1.06183654654535962, 1e-14));
  CHECK(r.converged);

  // Determinantal formula, evaluated independently at high precision.
  const auto a = real_spectrum({0.5, 0.2});
  const auto b = real_spectrum({0.3, 0.1});
  const auto s1 = f00_series(1.0, a, b, 30);
  CHECK_THAT(s1.value.real(), WithinRel(1.15044634769157037, 1e-12));
  // Average of exp(tr(A R B R')) over the rotation group in two dimensions.
  const auto s2 = f00_series(2.0, a, b, 30);
  CHECK_THAT(s2.value.real(), WithinRel(1.15053262502048687, 1e-12));

  CHECK_THROWS_AS(f00_series(1.0, a, real_spectrum({1.0}), 10), InvalidArgument);
  CHECK_THROWS_AS(f00_series(0.0, a, b, 10), InvalidArgument);
}

TEST_CASE("f00_series is scalar exponential for one variable at every alpha") {
  for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
    const auto v = f00_series(alpha, real_spectrum({0.7}), real_spectrum({-1.3}), 40);
    CHECK_THAT(v.value.real(), WithinRel(std::exp(-0.91), 1e-13));
  }
}

TEST_CASE("f00_series is symmetric in its arguments") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double alpha : {0.5, 1.0, 2.0}) {
    Spectrum a(3), b(3);
    for (auto& v : a) v = Complex{u(rng), u(rng)};
    for (auto& v : b) v = Complex{u(rng), u(rng)};
    const auto ab = f00_series(alpha, a, b, 25);
    const auto ba = f00_series(alpha, b, a, 25);
    CHECK(std::abs(ab.value - ba.value) <= 1e-13 * std::abs(ab.value));
    CHECK(ab.error < 1e-10);
  }
}

TEST_CASE("Torus product examples") {
  const auto off = torus_inner_product(Partition{1}, Partition{2}, 1.0, 2);
  CHECK(std::abs(off.value) <= 1e-8);

  const auto diag = torus_inner_product(Partition{1}, Partition{1}, 1.0, 2);
  CHECK_THAT(diag.value.real(), WithinRel(torus_norm_closed_form(Partition{1}, 1.0, 2), 1e-6));
  CHECK_THAT(diag.value.real(), WithinRel(1.0, 1e-9));

  const auto odd = torus_inner_product(Partition{2}, Partition{1, 1}, 2.0, 3);
  CHECK(std::abs(odd.value) <= 1e-6);

  CHECK_THROWS_AS(torus_inner_product(Partition{1}, Partition{1}, 0.7, 2), InvalidArgument);
}

TEST_CASE("Jack polynomials are orthogonal on the torus") {
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (int r = 1; r <= 3; ++r) {
      std::vector<Partition> ps;
      for (int k = 0; k <= 3; ++k)
        for (auto& p : enumerate_partitions(k, r)) ps.push_back(p);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = i; j < ps.size(); ++j) {
          if (ps[i].weight() != ps[j].weight()) continue;
          const auto v = torus_inner_product(ps[i], ps[j], alpha, r, 8, 1e-9);
          INFO("alpha=" << alpha << " r=" << r << " i=" << i << " j=" << j);
          if (i == j) {
            const double expect = torus_norm_closed_form(ps[i], alpha, r);
            CHECK(std::abs(v.value - expect) <= 1e-6 * expect);
          } else {
            CHECK(std::abs(v.value) <= 1e-6);
          }
        }
      }
    }
  }
}
