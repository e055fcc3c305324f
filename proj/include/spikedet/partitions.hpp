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

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "spikedet/core.hpp"

namespace spikedet {

/// Diagonal of a matrix argument.
using Spectrum = std::vector<Complex>;

/// Integer partition with non-increasing positive parts.
struct Partition {
  std::vector<int> parts;

  Partition() = default;
  explicit Partition(std::vector<int> p) : parts(std::move(p)) {
    for (std::size_t i = 0; i < parts.size(); ++i) {
      if (parts[i] < 1) throw InvalidArgument("partition parts must be positive");
      if (i > 0 && parts[i] > parts[i - 1])
        throw InvalidArgument("partition parts must be non-increasing");
    }
  }
  Partition(std::initializer_list<int> p) : Partition(std::vector<int>(p)) {}

  int weight() const {
    int w = 0;
    for (int v : parts) w += v;
    return w;
  }
  int length() const { return static_cast<int>(parts.size()); }
  /// Part i (0-based), zero beyond the length.
  int operator[](int i) const { return i < length() ? parts[i] : 0; }
  /// Column length kappa'_j (0-based column j).
  int column(int j) const {
    int c = 0;
    while (c < length() && parts[c] > j) ++c;
    return c;
  }

  auto operator<=>(const Partition&) const = default;
  bool operator==(const Partition&) const = default;
};

/// Arm, leg, co-arm, co-leg and the two hook lengths of every cell, with
/// the products c, c' and w = c c'. Cells are listed row by row.
struct FerrersStats {
  std::vector<int> arm, leg, coarm, coleg;
  std::vector<double> upper_hook, lower_hook;
  double c = 1.0;
  double c_prime = 1.0;
  double w = 1.0;

  static FerrersStats compute(const Partition& kappa, double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    FerrersStats st;
    for (int i = 0; i < kappa.length(); ++i) {
      for (int j = 0; j < kappa[i]; ++j) {
        const int a = kappa[i] - j - 1;
        const int l = kappa.column(j) - i - 1;
        st.arm.push_back(a);
        st.leg.push_back(l);
        st.coarm.push_back(j);
        st.coleg.push_back(i);
        const double up = l + alpha * (1.0 + a);
        const double lo = l + 1.0 + alpha * a;
        st.upper_hook.push_back(up);
        st.lower_hook.push_back(lo);
        st.c *= lo;
        st.c_prime *= up;
      }
    }
    st.w = st.c * st.c_prime;
    return st;
  }
};

namespace detail {

inline void enumerate_rec(int remaining, int max_part, int slots, std::vector<int>& cur,
                          std::vector<Partition>& out) {
  if (remaining == 0) {
    Partition p;
    p.parts = cur;
    out.push_back(std::move(p));
    return;
  }
  if (slots == 0) return;
  for (int part = std::min(remaining, max_part); part >= 1; --part) {
    cur.push_back(part);
    enumerate_rec(remaining - part, part, slots - 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

/// All partitions of k with at most max_length parts, reverse-lexicographic.
inline std::vector<Partition> enumerate_partitions(int k, int max_length) {
  if (k < 0) throw InvalidArgument("partition weight must be non-negative");
  if (max_length < 1) throw InvalidArgument("max_length must be positive");
  std::vector<Partition> out;
  std::vector<int> cur;
  detail::enumerate_rec(k, k, max_length, cur, out);
  return out;
}

/// alpha^|kappa| |kappa|! / w(kappa, alpha), the factor taking J to C.
inline double jack_C_factor(const Partition& kappa, double alpha) {
  const FerrersStats st = FerrersStats::compute(kappa, alpha);
  const int k = kappa.weight();
  return std::exp(k * std::log(alpha) + log_factorial(k) - std::log(st.w));
}

/// C_kappa at the m x m identity.
inline double jack_C_identity(const Partition& kappa, double alpha, int m) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (m < 1) throw InvalidArgument("identity dimension must be positive");
  if (kappa.length() > m) return 0.0;
  const FerrersStats st = FerrersStats::compute(kappa, alpha);
  double prod = 1.0;
  for (std::size_t s = 0; s < st.arm.size(); ++s) prod *= m + alpha * st.coarm[s] - st.coleg[s];
  return jack_C_factor(kappa, alpha) * prod;
}

/// Precomputed horizontal-strip recursion for Jack polynomials: every
/// partition of weight at most max_degree with at most max_vars parts, and
/// for each one the list of (mu, coefficient) pairs with kappa/mu a
/// horizontal strip.
///
/// J_kappa(x_1..x_m) = sum_mu J_mu(x_1..x_{m-1}) x_m^{|kappa|-|mu|} beta_{kappa mu}
class JackBasis {
 public:
  struct Strip {
    int mu;
    int degree_drop;
    double beta;
  };

  JackBasis(double alpha, int max_degree, int max_vars)
      : alpha_(alpha), max_degree_(max_degree), max_vars_(max_vars) {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    if (max_degree < 0 || max_vars < 1) throw InvalidArgument("invalid Jack basis size");
    for (int k = 0; k <= max_degree; ++k) {
      degree_start_.push_back(static_cast<int>(parts_.size()));
      for (auto& p : enumerate_partitions(k, max_vars)) {
        index_.emplace(p.parts, static_cast<int>(parts_.size()));
        parts_.push_back(std::move(p));
      }
    }
    degree_start_.push_back(static_cast<int>(parts_.size()));
    strips_.resize(parts_.size());
    factor_.resize(parts_.size());
    for (std::size_t i = 0; i < parts_.size(); ++i) {
      factor_[i] = jack_C_factor(parts_[i], alpha);
      build_strips(static_cast<int>(i));
    }
  }

  double alpha() const { return alpha_; }
  int max_degree() const { return max_degree_; }
  int max_vars() const { return max_vars_; }
  const std::vector<Partition>& partitions() const { return parts_; }
  /// Partitions of weight k occupy [degree_begin(k), degree_begin(k+1)).
  int degree_begin(int k) const { return degree_start_[k]; }

  int index_of(const Partition& p) const {
    auto it = index_.find(p.parts);
    if (it == index_.end()) throw InvalidArgument("partition outside the Jack basis");
    return it->second;
  }

  /// C_kappa(x) for every partition of the basis.
  std::vector<Complex> evaluate(std::span<const Complex> x) const {
    const int n = static_cast<int>(x.size());
    if (n > max_vars_) throw InvalidArgument("too many variables for Jack basis");
    const std::size_t count = parts_.size();
    std::vector<Complex> prev(count, Complex{}), cur(count, Complex{});
    prev[0] = 1.0;
    std::vector<Complex> powers(max_degree_ + 1);
    for (int m = 1; m <= n; ++m) {
      powers[0] = 1.0;
      for (int d = 1; d <= max_degree_; ++d) powers[d] = powers[d - 1] * x[m - 1];
      for (std::size_t i = 0; i < count; ++i) {
        if (parts_[i].length() > m) {
          cur[i] = 0.0;
          continue;
        }
        Complex acc{};
        for (const Strip& s : strips_[i]) {
          const Complex v = prev[s.mu];
          if (v != Complex{}) acc += v * powers[s.degree_drop] * s.beta;
        }
        cur[i] = acc;
      }
      std::swap(prev, cur);
    }
    for (std::size_t i = 0; i < count; ++i) prev[i] *= factor_[i];
    return prev;
  }

 private:
  void build_strips(int idx) {
    const Partition& kappa = parts_[idx];
    const int len = kappa.length();
    // mu_i ranges over [kappa_{i+1}, kappa_i].
    std::vector<int> mu(len, 0);
    auto rec = [&](auto&& self, int i) -> void {
      if (i == len) {
        std::vector<int> trimmed;
        for (int v : mu)
          if (v > 0) trimmed.push_back(v);
        Partition m;
        m.parts = std::move(trimmed);
        const int mi = index_.at(m.parts);
        strips_[idx].push_back({mi, kappa.weight() - m.weight(), strip_beta(kappa, m)});
        return;
      }
      for (int v = kappa[i + 1]; v <= kappa[i]; ++v) {
        mu[i] = v;
        self(self, i + 1);
      }
    };
    rec(rec, 0);
  }

  double strip_beta(const Partition& kappa, const Partition& mu) const {
    double num = 1.0, den = 1.0;
    auto hook = [&](const Partition& nu, int i, int j) {
      const int a = nu[i] - j - 1;
      const int l = nu.column(j) - i - 1;
      if (kappa.column(j) == mu.column(j)) return l + alpha_ * (1.0 + a);
      return l + 1.0 + alpha_ * a;
    };
    for (int i = 0; i < kappa.length(); ++i)
      for (int j = 0; j < kappa[i]; ++j) num *= hook(kappa, i, j);
    for (int i = 0; i < mu.length(); ++i)
      for (int j = 0; j < mu[i]; ++j) den *= hook(mu, i, j);
    return num / den;
  }

  double alpha_;
  int max_degree_;
  int max_vars_;
  std::vector<Partition> parts_;
  std::vector<int> degree_start_;
  std::map<std::vector<int>, int> index_;
  std::vector<std::vector<Strip>> strips_;
  std::vector<double> factor_;
};

/// Shared, lazily built bases keyed by (alpha, degree, vars).
inline std::shared_ptr<const JackBasis> jack_basis(double alpha, int max_degree, int max_vars) {
  static std::mutex mu;
  static std::map<std::tuple<double, int, int>, std::shared_ptr<const JackBasis>> cache;
  const auto key = std::make_tuple(alpha, max_degree, max_vars);
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
  }
  auto basis = std::make_shared<const JackBasis>(alpha, max_degree, max_vars);
  std::lock_guard lock(mu);
  return cache.emplace(key, std::move(basis)).first->second;
}

/// C_kappa^(alpha)(x).
inline Complex jack_C(const Partition& kappa, double alpha, std::span<const Complex> x) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  const int n = static_cast<int>(x.size());
  if (kappa.length() > n) return 0.0;
  if (n == 0) return 1.0;
  auto basis = jack_basis(alpha, kappa.weight(), n);
  return basis->evaluate(x)[basis->index_of(kappa)];
}

inline constexpr int kDefaultSeriesDegree = 20;

/// Truncated hypergeometric series 0F0^(alpha)(a, b). The error field is
/// the magnitude of the last degree kept; converged is set when two
/// consecutive degrees fall below 1e-14 of the running sum.
inline Estimate<Complex> f00_series(double alpha, std::span<const Complex> a, std::span<const Complex> b,
                                    int max_degree = kDefaultSeriesDegree) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (a.size() != b.size()) throw InvalidArgument("spectra must have equal dimension");
  if (max_degree < 1) throw InvalidArgument("max_degree must be positive");
  const int p = static_cast<int>(a.size());
  Estimate<Complex> out;
  out.value = 1.0;
  out.converged = false;
  if (p == 0) {
    out.converged = true;
    return out;
  }
  auto basis = jack_basis(alpha, max_degree, p);
  const auto ca = basis->evaluate(a);
  const auto cb = basis->evaluate(b);
  const auto& parts = basis->partitions();
  int quiet = 0;
  double last = 0.0;
  for (int k = 1; k <= max_degree; ++k) {
    Complex term{};
    const double inv_fact = std::exp(-log_factorial(k));
    for (int i = basis->degree_begin(k); i < basis->degree_begin(k + 1); ++i) {
      if (ca[i] == Complex{} || cb[i] == Complex{}) continue;
      term += ca[i] * cb[i] / jack_C_identity(parts[i], alpha, p) * inv_fact;
    }
    out.value += term;
    last = std::abs(term);
    out.nodes = k;
    if (last <= 1e-14 * std::abs(out.value)) {
      if (++quiet >= 2) {
        out.converged = true;
        break;
      }
    } else {
      quiet = 0;
    }
  }
  out.error = last;
  return out;
}

/// Right-hand side of the torus norm formula for C_kappa in r variables.
inline double torus_norm_closed_form(const Partition& kappa, double alpha, int r) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (r < kappa.length()) return 0.0;
  const FerrersStats st = FerrersStats::compute(kappa, alpha);
  const int k = kappa.weight();
  double log_v = 2.0 * (k * std::log(alpha) + log_factorial(k)) - std::log(st.w);
  for (int j = 1; j <= r; ++j)
    log_v += std::lgamma((r - j + 1) / alpha) - std::lgamma(1.0 / alpha) - std::lgamma(1.0 + (r - j) / alpha);
  double prod = 1.0;
  for (std::size_t s = 0; s < st.arm.size(); ++s)
    prod *= (r + st.coarm[s] * alpha - st.coleg[s]) / (r + (st.coarm[s] + 1) * alpha - st.coleg[s] - 1.0);
  return std::exp(log_v) * prod;
}

namespace detail {

/// Integrates F over the r-torus of the given radius (in the angles)
/// divided by (2 pi)^r r!. The first angle is sampled uniformly; the
/// offsets of the others are split into ordered cells so that |z_i - z_j|
/// kinks sit on cell boundaries, where Gauss-Legendre converges spectrally.
template <typename F>
Complex torus_average(int r, int nodes, F&& f, double radius = 1.0) {
  const double two_pi = 2.0 * kPi;
  const GaussLegendre& gl = gauss_legendre_cached(nodes);
  std::vector<Complex> z(r);
  Complex total{};
  auto on = [radius](double t) { return radius * Complex{std::cos(t), std::sin(t)}; };
  for (int a = 0; a < nodes; ++a) {
    const double t1 = two_pi * a / nodes;
    z[0] = on(t1);
    if (r == 1) {
      total += f(std::span<const Complex>(z)) / static_cast<double>(nodes);
      continue;
    }
    if (r == 2) {
      Complex inner{};
      for (int b = 0; b < nodes; ++b) {
        const double d = kPi * (gl.nodes[b] + 1.0);
        z[1] = on(t1 + d);
        inner += gl.weights[b] * kPi * f(std::span<const Complex>(z));
      }
      total += inner / (two_pi * nodes);
      continue;
    }
    // r == 3: triangles d2 < d3 and d3 < d2 on (0, 2 pi)^2.
    Complex inner{};
    for (int b = 0; b < nodes; ++b) {
      const double u = kPi * (gl.nodes[b] + 1.0);
      const double wu = gl.weights[b] * kPi;
      for (int c = 0; c < nodes; ++c) {
        const double v = 0.5 * (gl.nodes[c] + 1.0);
        const double wv = 0.5 * gl.weights[c];
        const double lo = u * v;
        z[1] = on(t1 + lo);
        z[2] = on(t1 + u);
        inner += wu * wv * u * f(std::span<const Complex>(z));
        z[1] = on(t1 + u);
        z[2] = on(t1 + lo);
        inner += wu * wv * u * f(std::span<const Complex>(z));
      }
    }
    total += inner / (two_pi * two_pi * nodes);
  }
  return total / factorial(r);
}

}  // namespace detail

/// Torus scalar product of C_kappa and C_tau in r variables, with node
/// doubling until the change is below tol.
inline Estimate<Complex> torus_inner_product(const Partition& kappa, const Partition& tau, double alpha, int r,
                                             int nodes = 16, double tol = 1e-10, int max_nodes = 256) {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  const double beta = 2.0 / alpha;
  if (std::abs(beta - std::round(beta)) > 1e-12 || std::round(beta) < 1)
    throw InvalidArgument("torus product needs alpha = 2/beta with integer beta");
  if (r < 1 || r > 3) throw InvalidArgument("torus product supports 1 <= r <= 3");
  if (r < std::max(kappa.length(), tau.length())) throw InvalidArgument("r must cover both partitions");
  const int deg = std::max(kappa.weight(), tau.weight());
  auto basis = jack_basis(alpha, deg, r);
  const int ik = basis->index_of(kappa), it = basis->index_of(tau);
  auto integrand = [&](std::span<const Complex> z) {
    const auto c = basis->evaluate(z);
    double weight = 1.0;
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j) weight *= std::pow(std::abs(z[i] - z[j]), beta);
    return c[ik] * std::conj(c[it]) * weight;
  };
  Estimate<Complex> out;
  Complex prev = detail::torus_average(r, nodes, integrand);
  for (int n = 2 * nodes; n <= max_nodes; n *= 2) {
    const Complex next = detail::torus_average(r, n, integrand);
    out.value = next;
    out.error = std::abs(next - prev);
    out.nodes = n;
    out.converged = out.error <= tol * std::max(1.0, std::abs(next));
    if (out.converged) return out;
    prev = next;
  }
  throw ConvergenceError("torus quadrature did not reach tolerance");
}

}  // namespace spikedet
