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
#include "spikedet/contour.hpp"
#include "spikedet/mp.hpp"
#include "spikedet/randmat.hpp"

using namespace spikedet;

TEST_CASE("encircle_points geometry and winding") {
  const std::vector<Complex> pts{{0.0, 0.0}, {4.0, 0.0}};
  const auto path = encircle_points(pts, 0.5);
  const auto& pcs = path.pieces();
  REQUIRE(pcs.size() == 5);
  CHECK(pcs[0].from == Complex{4.5, 0.0});
  CHECK(pcs[1].from == Complex{4.5, 0.5});
  CHECK(pcs[2].from == Complex{-0.5, 0.5});
  CHECK(pcs[3].from == Complex{-0.5, -0.5});
  CHECK(path.winding_number({2.0, 0.0}) == 1);
  CHECK(path.winding_number({0.0, 0.0}) == 1);
  CHECK(path.winding_number({5.0, 0.0}) == 0);

  const std::vector<Complex> one{{1.0, 0.0}};
  CHECK(encircle_points(one, 1.0).winding_number({5.0, 0.0}) == 0);
  CHECK(encircle_points(one, 1.0).winding_number({1.0, 0.0}) == 1);
  CHECK_THROWS_AS(encircle_points(std::vector<Complex>{}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(encircle_points(one, 0.0), InvalidArgument);
}

TEST_CASE("encircle_points winds once around null Wishart eigenvalues") {
  SpikeParams params;
  params.n = 50;
  params.p = 50;
  const auto sample = sample_spiked_eigs(params, 3);
  std::vector<Complex> pts;
  for (double l : sample.lambda) pts.emplace_back(l, 0.0);
  const auto path = encircle_points(pts, 0.25);
  for (auto p : pts) CHECK(path.winding_number(p) == 1);
  CHECK(path.winding_number({sample.lambda.front() + 1.0, 0.0}) == 0);
}

TEST_CASE("integrate residue examples") {
  const auto unit = circle_path(0.0, 1.0);
  const auto a = integrate(unit, [](Complex z) { return 1.0 / z; });
  CHECK(a.converged);
  CHECK(std::abs(a.value - kTwoPiI) <= 1e-10);

  const std::vector<Complex> pts{{-1.0, 2.0}, {3.0, -1.0}};
  const auto rect = encircle_points(pts, 0.7);
  const auto b = integrate(rect, [](Complex z) { return z; });
  CHECK(std::abs(b.value) <= 1e-10);

  const auto c = integrate(circle_path(1.0, 0.5), [](Complex z) { return std::exp(z) / ((z - 1.0) * (z - 1.0)); });
  CHECK(std::abs(c.value - kTwoPiI * std::exp(1.0)) <= 1e-8);
  CHECK(c.error < 1e-8);
}

TEST_CASE("Gauss-Legendre panels integrate polynomials exactly") {
  const auto gl = gauss_legendre(16);
  double sum = 0.0, m30 = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    sum += gl.weights[i];
    m30 += gl.weights[i] * std::pow(gl.nodes[i], 30);
  }
  CHECK(std::abs(sum - 2.0) < 1e-14);
  CHECK(std::abs(m30 - 2.0 / 31.0) < 1e-14);
}

TEST_CASE("Contour integrals are invariant under deformation") {
  auto f = [](Complex z) { return std::exp(0.7 * z) / ((z - 0.2) * (z - 1.1) * (z + Complex{0.3, 0.4})); };
  const std::vector<Complex> pts{{0.2, 0.0}, {1.1, 0.0}, {-0.3, -0.4}};
  const auto r1 = integrate(encircle_points(pts, 0.3), f);
  const auto r2 = integrate(circle_path({0.4, 0.0}, 2.5), f);
  const auto r3 = integrate(steepest_contour(1.5, 1.5, 2.0, -1.0, 0.1).path, f);
  CHECK(std::abs(r1.value - r2.value) <= r1.error + r2.error + 1e-12);
  CHECK(std::abs(r1.value - r3.value) <= r1.error + r3.error + 1e-12);
}

TEST_CASE("integrate is linear and odd under reversal") {
  const auto path = circle_path({0.5, 0.0}, 1.3);
  auto f = [](Complex z) { return 1.0 / (z * (z - 1.0)) + z * z; };
  auto g = [](Complex z) { return std::exp(z) / (z - 0.25); };
  const auto fi = integrate(path, f).value;
  const auto gi = integrate(path, g).value;
  const auto comb = integrate(path, [&](Complex z) { return 2.0 * f(z) - Complex{0, 3} * g(z); }).value;
  CHECK(std::abs(comb - (2.0 * fi - Complex{0, 3} * gi)) <= 1e-12);
  const auto rev = integrate(path.reversed(), g).value;
  CHECK(std::abs(rev + gi) <= 1e-12);
  const auto rect = encircle_points(std::vector<Complex>{{0.0, 0.0}, {1.0, 0.0}}, 0.4);
  CHECK(std::abs(integrate(rect.reversed(), g).value + integrate(rect, g).value) <= 1e-12);
}

TEST_CASE("fractional_power_product examples") {
  const auto path = encircle_points(std::vector<Complex>{{0.0, 0.0}, {1.0, 0.0}}, 0.5);
  const auto ns = path.discretize(0);
  const std::vector<Complex> b{{0.0, 0.0}, {1.0, 0.0}};

  const auto inv = fractional_power_product(ns.z, b, -1.0);
  for (std::size_t k = 0; k < ns.size(); ++k) {
    const Complex direct = 1.0 / ((ns.z[k] - b[0]) * (ns.z[k] - b[1]));
    CHECK(std::abs(inv.values[k] - direct) <= 1e-12 * std::abs(direct));
  }

  const auto half = fractional_power_product(ns.z, b, -0.5, true);
  double total = 0.0;
  for (double t : half.total_argument) total += t;
  const Complex ratio = std::exp(Complex{0.0, -0.5 * total});
  CHECK(std::abs(ratio - 1.0) <= 1e-12);
  CHECK(std::abs(total - 4.0 * kPi) <= 1e-9);

  // Odd count: continuation around the loop flips the sign.
  const std::vector<Complex> b3{{0.0, 0.0}, {0.5, 0.0}, {1.0, 0.0}};
  const auto odd = fractional_power_product(ns.z, b3, -0.5, true);
  double t3 = 0.0;
  for (double t : odd.total_argument) t3 += t;
  CHECK(std::abs(std::exp(Complex{0.0, -0.5 * t3}) + 1.0) <= 1e-12);
}

TEST_CASE("fractional_power_product on an open arc matches a denser walk") {
  ContourPiece arc;
  arc.kind = ContourPiece::Kind::kArc;
  arc.center = {0.5, 0.0};
  arc.radius = 1.5;
  arc.theta0 = 0.0;
  arc.theta1 = kPi;
  arc.panels = 2;
  const ContourPath half({arc}, false);
  const std::vector<Complex> b{{0.0, 0.0}, {0.5, 0.2}, {1.0, -0.1}};
  auto end_value = [&](int level) {
    const auto ns = half.discretize(level);
    auto fp = fractional_power_product(ns.z, b, -0.5);
    std::vector<Complex> z = ns.z;
    z.push_back(half.pieces()[0].point(1.0));
    fp = fractional_power_product(z, b, -0.5);
    return fp.values.back();
  };
  const Complex coarse = end_value(0);
  const Complex fine = end_value(4);
  CHECK(std::abs(coarse - fine) <= 1e-12 * std::abs(fine));
  // Analytic continuation across the upper half plane: arguments of z - b
  // at z = -1 are near pi, so the value is (prod |z - b|)^(-1/2) e^(-3 i pi/2 + ...).
  Complex expect = 1.0;
  for (auto bs : b) expect *= std::pow(std::abs(Complex{-1.0, 0.0} - bs), -0.5);
  double phase = 0.0;
  for (auto bs : b) {
    double a = std::arg(Complex{-1.0, 0.0} - bs);
    if (a < 0) a += 2.0 * kPi;
    phase += a;
  }
  expect *= std::exp(Complex{0.0, -0.5 * phase});
  CHECK(std::abs(fine - expect) <= 1e-12 * std::abs(expect));
}

TEST_CASE("fractional_power_product branch values are consistent under refinement") {
  const auto circle = circle_path({0.4, 0.0}, 1.0);
  const std::vector<Complex> b{{0.0, 0.0}, {0.8, 0.0}};
  const auto ns0 = circle.discretize(0);
  const auto ns1 = circle.discretize(1);
  const auto v0 = fractional_power_product(ns0.z, b, -0.5);
  const auto v1 = fractional_power_product(ns1.z, b, -0.5);
  for (std::size_t k = 0; k < ns0.size(); ++k) CHECK(std::abs(v0.values[k] - v1.values[2 * k]) <= 1e-8);
}

TEST_CASE("fractional_power_product error paths") {
  const std::vector<Complex> coarse{{1.0, 0.0}, {-1.0, 0.1}};
  const std::vector<Complex> b{{0.0, 0.0}};
  CHECK_THROWS_AS(fractional_power_product(coarse, b, -0.5), BranchError);
  const std::vector<Complex> on{{0.0, 0.0}, {1.0, 0.0}};
  CHECK_THROWS_AS(fractional_power_product(on, b, -0.5), DegenerateArgument);
}

TEST_CASE("steepest contour encloses the region left of its right edge") {
  const auto sc = steepest_contour(4.5, 4.5, 13.5, -3.0, 0.2);
  CHECK(sc.path.winding_number({0.0, 0.0}) == 1);
  CHECK(sc.path.winding_number({4.0, 0.0}) == 1);
  CHECK(sc.path.winding_number({-2.9, 0.0}) == 1);
  CHECK(sc.path.winding_number({5.0, 0.0}) == 0);
  CHECK(sc.path.pieces().front().from == Complex{4.5, 0.0});
  CHECK(sc.path.pieces().back().to == Complex{4.5, 0.0});
  CHECK_THROWS_AS(steepest_contour(1.0, 1.0, 1.0, 2.0, 0.1), InvalidArgument);
}
