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

#pragma once

#include <span>
#include <vector>

#include "spikedet/core.hpp"

namespace spikedet {

/// Marchenko-Pastur law with aspect ratio c = p / n: a density on
/// [(1 - sqrt c)^2, (1 + sqrt c)^2] plus an atom max(0, 1 - 1/c) at zero.
struct MPLaw {
  double c = 1.0;

  MPLaw() = default;
  explicit MPLaw(double c_) : c(c_) {
    if (!(c_ > 0.0) || !std::isfinite(c_)) throw InvalidArgument("aspect ratio must be positive");
  }
  static MPLaw from_dimensions(int n, int p) {
    if (n < 1 || p < 1) throw InvalidArgument("dimensions must be positive");
    return MPLaw(static_cast<double>(p) / n);
  }

  double lower() const { return (1.0 - std::sqrt(c)) * (1.0 - std::sqrt(c)); }
  double upper() const { return (1.0 + std::sqrt(c)) * (1.0 + std::sqrt(c)); }
  double atom() const { return std::max(0.0, 1.0 - 1.0 / c); }

  /// Distance from z to the support, the atom included.
  double support_distance(Complex z) const {
    const double x = std::clamp(z.real(), lower(), upper());
    double d = std::abs(z - Complex{x, 0.0});
    if (atom() > 0.0) d = std::min(d, std::abs(z));
    return d;
  }
};

/// Ordered eigenvalues of XX'/n, m = min(n, p) of them, with S and T.
struct EigenSample {
  std::vector<double> lambda;
  int n = 0;
  int p = 0;
  double S = 0.0;
  double T = 0.0;

  EigenSample() = default;
  EigenSample(std::vector<double> values, int n_, int p_) : lambda(std::move(values)), n(n_), p(p_) {
    if (n < 1 || p < 1) throw InvalidArgument("dimensions must be positive");
    if (static_cast<int>(lambda.size()) != std::min(n, p))
      throw InvalidArgument("sample must hold min(n, p) eigenvalues");
    std::sort(lambda.begin(), lambda.end(), std::greater<>());
    for (double l : lambda) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("eigenvalues must be finite and non-negative");
      S += l;
      T += l * l;
    }
  }
  int m() const { return static_cast<int>(lambda.size()); }
  double c_p() const { return static_cast<double>(p) / n; }
};

inline double mp_density(const MPLaw& law, double x) {
  const double a = law.lower(), b = law.upper();
  if (x <= a || x >= b || x <= 0.0) return 0.0;
  return std::sqrt((b - x) * (x - a)) / (2.0 * kPi * law.c * x);
}

namespace detail {

/// Integral of g against the continuous part of the law, in the variable
/// x = a + (b - a) sin^2(theta), which removes the square-root edges.
template <typename G>
auto mp_integrate(const MPLaw& law, G&& g, int nodes) {
  const double a = law.lower(), b = law.upper(), span = b - a;
  const GaussLegendre& gl = gauss_legendre_cached(nodes);
  using R = decltype(g(1.0));
  R acc{};
  for (int i = 0; i < nodes; ++i) {
    const double th = 0.25 * kPi * (gl.nodes[i] + 1.0);
    const double s = std::sin(th), co = std::cos(th);
    const double x = a + span * s * s;
    // psi(x) dx with sqrt((b-x)(x-a)) = span s c and dx = 2 span s c dtheta.
    const double dens = span * span * 2.0 * s * s * co * co / (2.0 * kPi * law.c * x);
    acc += g(x) * (dens * 0.25 * kPi * gl.weights[i]);
  }
  return acc;
}

template <typename G>
auto mp_integrate_adaptive(const MPLaw& law, G&& g, double tol = 1e-12) {
  auto prev = mp_integrate(law, g, 64);
  for (int n = 128; n <= 8192; n *= 2) {
    auto cur = mp_integrate(law, g, n);
    if (std::abs(cur - prev) <= tol * std::max(1.0, std::abs(cur))) return cur;
    prev = cur;
  }
  throw ConvergenceError("Marchenko-Pastur quadrature did not converge");
}

}  // namespace detail

/// Mass of the continuous part, by quadrature.
inline double mp_continuous_mass(const MPLaw& law) {
  return detail::mp_integrate_adaptive(law, [](double) { return 1.0; });
}

inline constexpr double kSupportGuard = 1e-9;

/// Integral of ln(z - lambda) against the law, atom included.
inline Complex mp_log_potential(const MPLaw& law, Complex z) {
  if (law.support_distance(z) < kSupportGuard) throw DegenerateArgument("z lies on the Marchenko-Pastur support");
  Complex v = detail::mp_integrate_adaptive(law, [z](double x) { return std::log(z - x); });
  if (law.atom() > 0.0) v += law.atom() * std::log(z);
  return v;
}

/// Integral of 1 / (z - lambda) against the law, atom included.
inline Complex mp_stieltjes(const MPLaw& law, Complex z) {
  if (law.support_distance(z) < kSupportGuard) throw DegenerateArgument("z lies on the Marchenko-Pastur support");
  Complex v = detail::mp_integrate_adaptive(law, [z](double x) { return 1.0 / (z - x); });
  if (law.atom() > 0.0) v += law.atom() / z;
  return v;
}

/// Closed form of the same transform through the companion law of X'X/n,
/// whose transform m_(z) = int 1/(x - z) behaves like -1/z at infinity.
inline Complex mp_stieltjes_closed_form(const MPLaw& law, Complex z) {
  const double c = law.c;
  Complex root = std::sqrt((z - c - 1.0) * (z - c - 1.0) - 4.0 * c);
  if ((root * std::conj(z - c - 1.0)).real() < 0.0) root = -root;
  const Complex m_under = (-z + c - 1.0 + root) / (2.0 * z);
  const Complex m = (m_under + (1.0 - c) / z) / c;
  return -m;
}

inline double mp_cdf(const MPLaw& law, double x) {
  const double a = law.lower(), b = law.upper();
  if (x < 0.0) return 0.0;
  if (x >= b) return 1.0;
  double base = law.atom();
  if (x <= a) return base;
  // theta range up to asin(sqrt((x-a)/(b-a))).
  const double th_max = std::asin(std::sqrt((x - a) / (b - a)));
  const GaussLegendre& gl = gauss_legendre_cached(64);
  const double span = b - a;
  double acc = 0.0;
  for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
    const double th = 0.5 * th_max * (gl.nodes[i] + 1.0);
    const double s = std::sin(th), co = std::cos(th);
    const double xx = a + span * s * s;
    acc += span * span * 2.0 * s * s * co * co / (2.0 * kPi * law.c * xx) * 0.5 * th_max * gl.weights[i];
  }
  return base + acc;
}

/// Inverse distribution function by bisection; quantiles inside the atom
/// map to zero.
inline double mp_quantile(const MPLaw& law, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  if (u <= law.atom()) return 0.0;
  double lo = law.lower(), hi = law.upper();
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mp_cdf(law, mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Eigenvalues placed at the law's quantiles (j - 1/2)/p, j = 1..p, largest
/// first, trimmed to min(n, p) entries.
inline EigenSample mp_quantile_sample(int n, int p) {
  const MPLaw law = MPLaw::from_dimensions(n, p);
  std::vector<double> v;
  for (int j = p; j >= 1; --j) v.push_back(mp_quantile(law, (j - 0.5) / p));
  v.resize(std::min(n, p));
  for (auto& x : v) x = std::max(x, 0.0);
  return EigenSample(std::move(v), n, p);
}

/// sum_{j<=p} ln(z - lambda_j) - p * log-potential, with p - m structural
/// zeros when p > n.
inline Complex delta_p_with_potential(const EigenSample& sample, Complex log_potential, Complex z) {
  Complex sum{};
  for (double l : sample.lambda) {
    const Complex d = z - l;
    if (std::abs(d) < kSupportGuard) throw DegenerateArgument("z coincides with a sample eigenvalue");
    sum += std::log(d);
  }
  const int zeros = sample.p - sample.m();
  if (zeros > 0) {
    if (std::abs(z) < kSupportGuard) throw DegenerateArgument("z coincides with a zero eigenvalue");
    sum += static_cast<double>(zeros) * std::log(z);
  }
  return sum - static_cast<double>(sample.p) * log_potential;
}

inline Complex delta_p(const EigenSample& sample, const MPLaw& law, Complex z) {
  return delta_p_with_potential(sample, mp_log_potential(law, z), z);
}

}  // namespace spikedet
