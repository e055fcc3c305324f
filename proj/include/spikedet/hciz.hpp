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

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "spikedet/contour.hpp"
#include "spikedet/core.hpp"
#include "spikedet/partitions.hpp"
#include "spikedet/randmat.hpp"

namespace spikedet {

/// alpha = 2 / beta with a positive integer beta.
struct AlphaParam {
  int beta = 2;

  static AlphaParam from_beta(int beta) {
    if (beta < 1) throw InvalidArgument("beta must be a positive integer");
    return AlphaParam{beta};
  }
  static AlphaParam from_alpha(double alpha) {
    if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
    const double b = 2.0 / alpha;
    if (std::abs(b - std::round(b)) > 1e-12 || std::round(b) < 1.0)
      throw InvalidArgument("alpha must equal 2/beta for a positive integer beta");
    return AlphaParam{static_cast<int>(std::round(b))};
  }

  double alpha() const { return 2.0 / beta; }
  bool odd() const { return beta % 2 == 1; }

  /// For odd beta the contour reduction needs p - r + 1 even.
  void check_parity(int p, int r) const {
    if (odd() && (p - r + 1) % 2 != 0)
      throw InvalidArgument("odd beta requires p - r + 1 to be even");
  }
};

/// diag(a_1, ..., a_r, 0, ..., 0) of dimension p with every a_j non-zero.
struct RankDeficientArg {
  Spectrum block;
  int p = 0;

  RankDeficientArg() = default;
  RankDeficientArg(Spectrum nonzero, int ambient) : block(std::move(nonzero)), p(ambient) {
    if (block.empty()) throw InvalidArgument("rank-deficient argument needs a non-empty block");
    if (p < static_cast<int>(block.size())) throw InvalidArgument("ambient dimension below block size");
    for (auto a : block)
      if (a == Complex{}) throw InvalidArgument("block entries must be non-zero");
  }

  int r() const { return static_cast<int>(block.size()); }

  Spectrum full() const {
    Spectrum out = block;
    out.resize(p, Complex{});
    return out;
  }
};

namespace detail {

/// V(x) = prod_{j>i} (x_j - x_i), as a log value.
inline LogValue log_vandermonde(std::span<const Complex> x) {
  LogValue v{0.0, Complex{1.0, 0.0}};
  for (std::size_t j = 0; j < x.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const LogValue d = log_value(x[j] - x[i]);
      v.log_abs += d.log_abs;
      v.phase *= d.phase;
    }
  }
  return v;
}

inline Complex vandermonde(std::span<const Complex> x) {
  Complex v = 1.0;
  for (std::size_t j = 0; j < x.size(); ++j)
    for (std::size_t i = 0; i < j; ++i) v *= x[j] - x[i];
  return v;
}

inline void require_distinct(std::span<const Complex> x, const char* what) {
  for (std::size_t j = 0; j < x.size(); ++j)
    for (std::size_t i = 0; i < j; ++i)
      if (std::abs(x[j] - x[i]) <= 1e-10 * std::max({1.0, std::abs(x[i]), std::abs(x[j])}))
        throw DegenerateArgument(std::string(what) + " has coincident entries");
}

/// Potentials u, v with u_i + v_j <= cost_ij and equality on a minimum
/// cost assignment (Hungarian method, row-major n x n costs).
inline void assignment_potentials(const std::vector<double>& cost, int n, std::vector<double>& u,
                                  std::vector<double>& v) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> uu(n + 1, 0.0), vv(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - uu[i0] - vv[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          uu[match[j]] += delta;
          vv[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  u.assign(uu.begin() + 1, uu.end());
  v.assign(vv.begin() + 1, vv.end());
}

/// log det of the matrix with entries exp(logs_ij). Rows and columns are
/// scaled by assignment potentials so that every entry has modulus at most
/// one and a full permutation of entries has modulus one.
inline LogValue log_det_from_logs(const std::vector<Complex>& logs, int n) {
  double finite_max = -std::numeric_limits<double>::infinity();
  double finite_min = std::numeric_limits<double>::infinity();
  for (const auto& l : logs) {
    if (std::isfinite(l.real())) {
      finite_max = std::max(finite_max, l.real());
      finite_min = std::min(finite_min, l.real());
    }
  }
  if (!std::isfinite(finite_max)) return {-std::numeric_limits<double>::infinity(), Complex{}};
  // Exact zeros get a cost worse than any finite entry.
  const double zero_cost = -finite_min + 1e3 * (1.0 + finite_max - finite_min);
  std::vector<double> cost(logs.size());
  for (std::size_t k = 0; k < logs.size(); ++k)
    cost[k] = std::isfinite(logs[k].real()) ? -logs[k].real() : zero_cost;
  std::vector<double> u, v;
  assignment_potentials(cost, n, u, v);
  std::vector<Complex> m(logs.size());
  double shift = 0.0;
  for (int i = 0; i < n; ++i) {
    shift -= u[i] + v[i];
    for (int j = 0; j < n; ++j) {
      const Complex l = logs[i * n + j];
      m[i * n + j] = std::isfinite(l.real()) ? std::exp(l + u[i] + v[j]) : Complex{};
    }
  }
  LogValue lv = log_value(small_determinant(std::move(m), n));
  lv.log_abs += shift;
  return lv;
}

inline LogValue log_div(LogValue a, LogValue b) {
  return {a.log_abs - b.log_abs, a.phase / b.phase};
}

}  // namespace detail

/// prod_{j<p} j! det(e^{a_i b_j}) / (V_p(a) V_p(b)) as a log value.
inline LogValue hciz_determinantal_log(std::span<const Complex> a, std::span<const Complex> b) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("spectra must have equal positive dimension");
  detail::require_distinct(a, "a");
  detail::require_distinct(b, "b");
  const int p = static_cast<int>(a.size());
  std::vector<Complex> le(p * p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) le[i * p + j] = a[i] * b[j];
  LogValue v = detail::log_det_from_logs(le, p);
  for (int j = 1; j < p; ++j) v.log_abs += log_factorial(j);
  v = detail::log_div(v, detail::log_vandermonde(a));
  return detail::log_div(v, detail::log_vandermonde(b));
}

inline Complex hciz_determinantal(std::span<const Complex> a, std::span<const Complex> b) {
  return hciz_determinantal_log(a, b).to_complex();
}

/// Confluent limit of the determinantal formula for a rank-deficient first
/// argument: the zero rows become b_j^l / l!, l < p - r, and the
/// Vandermonde of a becomes V_r(block) prod_i (-a_i)^(p-r).
inline LogValue hciz_rank_deficient_log(const RankDeficientArg& A, std::span<const Complex> b) {
  const int p = A.p, r = A.r(), m = p - r;
  if (static_cast<int>(b.size()) != p) throw InvalidArgument("b must have the ambient dimension");
  detail::require_distinct(A.block, "a");
  detail::require_distinct(b, "b");
  std::vector<Complex> le(p * p);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < p; ++j) le[i * p + j] = A.block[i] * b[j];
  for (int l = 0; l < m; ++l) {
    for (int j = 0; j < p; ++j) {
      const Complex e = std::pow(b[j], l) / factorial(l);
      le[(r + l) * p + j] = e == Complex{} ? Complex{-std::numeric_limits<double>::infinity(), 0.0} : std::log(e);
    }
  }
  LogValue v = detail::log_det_from_logs(le, p);
  for (int j = 1; j < p; ++j) v.log_abs += log_factorial(j);
  v = detail::log_div(v, detail::log_vandermonde(A.block));
  for (auto a : A.block) {
    const LogValue na = log_value(-a);
    v.log_abs -= m * na.log_abs;
    v.phase /= std::pow(na.phase, m);
  }
  return detail::log_div(v, detail::log_vandermonde(b));
}

inline Complex hciz_rank_deficient(const RankDeficientArg& A, std::span<const Complex> b) {
  return hciz_rank_deficient_log(A, b).to_complex();
}

namespace detail {

/// prod_j Gamma((p+1-j)/alpha) Gamma(1/alpha) / Gamma((r+1-j)/alpha).
inline double omega_gamma(double alpha, int p, int r) {
  double lg = 0.0;
  for (int j = 1; j <= r; ++j)
    lg += std::lgamma((p + 1 - j) / alpha) + std::lgamma(1.0 / alpha) - std::lgamma((r + 1 - j) / alpha);
  return std::exp(lg);
}

/// gamma prod_j a_j^(1 - (p-r+1)/alpha); the exponent is an integer under
/// the parity condition.
inline Complex omega_constant(const AlphaParam& al, const RankDeficientArg& A) {
  const int p = A.p, r = A.r();
  const int twice_e = 2 - al.beta * (p - r + 1);  // twice the exponent of a_j
  Complex c = omega_gamma(al.alpha(), p, r);
  for (auto a : A.block) c *= std::pow(a, twice_e / 2);
  return c;
}

/// Torus form of the weight on a circle about the origin that encloses b:
/// z_j^(-(p-r+1)/alpha) prod_s (1 - b_s/z_j)^(-1/alpha) and
/// |1 - z_i/z_j|^(2/alpha) replace the multivalued factors.
inline Complex omega_torus(const AlphaParam& al, const RankDeficientArg& A, std::span<const Complex> b,
                           std::span<const Complex> z) {
  const double inv_alpha = al.beta / 2.0;
  const int r = A.r();
  Complex v = omega_constant(al, A);
  const int twice_e = al.beta * (A.p - r + 1);
  for (int j = 0; j < r; ++j) {
    v *= std::pow(z[j], -twice_e / 2);
    Complex logsum{};
    for (auto bs : b) logsum += std::log(1.0 - bs / z[j]);
    v *= std::exp(-inv_alpha * logsum);
  }
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < j; ++i) v *= std::pow(std::abs(1.0 - z[i] / z[j]), al.beta);
  return v;
}

}  // namespace detail

/// Weight of the r-fold contour reduction at the point z. `branch_powers`
/// holds prod_s (z_j - b_s)^(-1/alpha) on the branch chosen along the
/// contour; it may be empty when 1/alpha is an integer. For odd beta and
/// r >= 2 the torus form is used, which needs the z_j on a common circle
/// about the origin enclosing b.
inline Complex omega_weight(const AlphaParam& al, const RankDeficientArg& A, std::span<const Complex> b,
                            std::span<const Complex> z, std::span<const Complex> branch_powers = {}) {
  const int r = A.r();
  if (static_cast<int>(b.size()) != A.p) throw InvalidArgument("b must have the ambient dimension");
  if (static_cast<int>(z.size()) != r) throw InvalidArgument("z must have r entries");
  al.check_parity(A.p, r);
  if (al.odd() && r >= 2) {
    double bmax = 0.0;
    for (auto bs : b) bmax = std::max(bmax, std::abs(bs));
    for (auto zj : z) {
      if (std::abs(std::abs(zj) - std::abs(z[0])) > 1e-9 * std::abs(z[0]))
        throw InvalidArgument("odd beta weight needs points on a common circle about the origin");
      if (std::abs(zj) <= bmax) throw InvalidArgument("circle must enclose every b_s");
    }
    return detail::omega_torus(al, A, b, z);
  }
  Complex v = detail::omega_constant(al, A);
  // (-1)^(r(r-1) beta / 4) is real here: beta is even or r = 1.
  if ((r * (r - 1) / 2 * al.beta / 2) % 2 != 0) v = -v;
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < j; ++i) v *= std::pow(z[j] - z[i], al.beta);
  if (branch_powers.empty()) {
    if (al.odd()) throw InvalidArgument("branch state required for half-integer powers");
    for (int j = 0; j < r; ++j) {
      Complex prod = 1.0;
      for (auto bs : b) prod *= z[j] - bs;
      v *= std::pow(prod, -al.beta / 2);
    }
  } else {
    if (static_cast<int>(branch_powers.size()) != r) throw InvalidArgument("branch state must have r entries");
    for (int j = 0; j < r; ++j) v *= branch_powers[j];
  }
  return v;
}

inline constexpr int kMaxContourRank = 3;

namespace detail {

/// Series degree for 0F0(a, z) given the argument sizes.
inline int series_degree(double amax, double zmax, int r) {
  const double x = r * amax * zmax;
  return std::clamp(static_cast<int>(std::ceil(std::exp(1.0) * x)) + 30, 30, 80);
}

inline double max_abs(std::span<const Complex> x) {
  double m = 0.0;
  for (auto v : x) m = std::max(m, std::abs(v));
  return m;
}

/// Inner function 0F0(block, z) times V_r(z) when alpha = 1:
/// prod_{j<r} j! det(e^{a_i z_j}) / V_r(block).
inline Complex hciz_inner_times_vandermonde(std::span<const Complex> a, std::span<const Complex> z,
                                            const Complex& inv_va) {
  const int r = static_cast<int>(a.size());
  std::vector<Complex> m(r * r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) m[i * r + j] = std::exp(a[i] * z[j]);
  double f = 1.0;
  for (int j = 1; j < r; ++j) f *= factorial(j);
  return f * small_determinant(std::move(m), r) * inv_va;
}

}  // namespace detail

struct ContourReductionOptions {
  IntegrateOptions integrate;
  int max_degree = 0;           // series degree; 0 picks it from the argument sizes
  int torus_nodes = 16;         // starting nodes per angle on the odd-beta route
  int max_torus_nodes = 512;
};

/// 0F0^(alpha)(A, B) for rank-deficient A by the r-fold contour reduction
/// over `contour`, which must wind once around every b_s. For odd beta and
/// r >= 2 the contour must be a full circle about the origin; the integral
/// is then taken in the angles with kink-aligned cells.
inline Estimate<Complex> f00_rank_deficient(const AlphaParam& al, const RankDeficientArg& A,
                                            std::span<const Complex> b, const ContourPath& contour,
                                            const ContourReductionOptions& opt = {}) {
  const int r = A.r(), p = A.p;
  if (r > kMaxContourRank) throw InvalidArgument("contour reduction supports r <= 3");
  if (static_cast<int>(b.size()) != p) throw InvalidArgument("b must have the ambient dimension");
  al.check_parity(p, r);
  for (auto bs : b)
    if (contour.winding_number(bs) != 1) throw InvalidArgument("contour must wind once around every b_s");

  const double alpha = al.alpha();
  const bool unitary = al.beta == 2;
  const Spectrum& a = A.block;
  const Complex inv_va = unitary ? 1.0 / detail::vandermonde(a) : Complex{};
  const double amax = detail::max_abs(a);

  auto inner = [&](std::span<const Complex> z, int degree) -> Complex {
    if (r == 1) return std::exp(a[0] * z[0]);
    if (unitary) return detail::hciz_inner_times_vandermonde(a, z, inv_va);
    return f00_series(alpha, a, z, degree).value;
  };

  if (al.odd() && r >= 2) {
    const auto& pcs = contour.pieces();
    if (pcs.size() != 1 || !pcs[0].full_circle() || std::abs(pcs[0].center) > 1e-14)
      throw InvalidArgument("odd beta with r >= 2 needs a circle about the origin");
    const double radius = pcs[0].radius;
    if (radius <= detail::max_abs(b)) throw InvalidArgument("circle must enclose every b_s");
    const int degree = opt.max_degree > 0 ? opt.max_degree : detail::series_degree(amax, radius, r);
    auto run = [&](int nodes) {
      return detail::torus_average(
          r, nodes,
          [&](std::span<const Complex> z) {
            Complex prod = 1.0;
            for (auto zj : z) prod *= zj;
            return inner(z, degree) * detail::omega_torus(al, A, b, z) * prod;
          },
          radius);
    };
    Estimate<Complex> out;
    out.converged = false;
    Complex prev = run(opt.torus_nodes);
    for (int n = 2 * opt.torus_nodes; n <= opt.max_torus_nodes; n *= 2) {
      const Complex cur = run(n);
      out.value = cur;
      out.error = std::abs(cur - prev);
      out.nodes = n;
      if (out.error <= std::max(opt.integrate.tolerance * std::abs(cur), 1e-15)) {
        out.converged = true;
        break;
      }
      prev = cur;
    }
    return out;
  }

  // Literal weight on the supplied contour; the fractional powers are
  // continued along the discretised path.
  const Complex cst = [&] {
    Complex c = detail::omega_constant(al, A);
    if ((r * (r - 1) / 2 * al.beta / 2) % 2 != 0) c = -c;
    return c;
  }();
  double zmax = 0.0;
  for (const auto& pc : contour.pieces()) zmax = std::max({zmax, std::abs(pc.from), std::abs(pc.to),
                                                            std::abs(pc.center) + pc.radius});
  const int degree = opt.max_degree > 0 ? opt.max_degree : detail::series_degree(amax, zmax, r);
  const double exponent = -al.beta / 2.0;
  std::vector<ContourPath> paths(r, contour);
  auto make = [&](const std::vector<NodeSet>& sets) {
    const NodeSet& ns = sets[0];
    // Principal values at the first node agree with continuation from the
    // far right unless some b_s lies on the ray to its right.
    if (al.odd()) {
      for (auto bs : b) {
        const Complex d = ns.z[0] - bs;
        if (std::abs(d.imag()) <= 1e-12 * std::max(1.0, std::abs(d)) && d.real() < 0.0)
          throw BranchError("contour must start to the right of every b_s");
      }
    }
    auto fp = fractional_power_product(ns.z, b, exponent, true);
    double turns = 0.0;
    for (double t : fp.total_argument) turns += t;
    const Complex monodromy = std::exp(Complex{0.0, exponent * turns});
    if (std::abs(monodromy - 1.0) > 1e-8) throw BranchError("weight is not single-valued on the contour");
    return [&ns, cst, r, degree, &al, &inner, unitary, powers = std::move(fp.values)](
               std::span<const std::size_t> idx) {
      Complex z[kMaxContourRank];
      Complex v = cst;
      for (int j = 0; j < r; ++j) {
        z[j] = ns.z[idx[j]];
        v *= powers[idx[j]];
      }
      const std::span<const Complex> zs(z, r);
      if (unitary) {
        // One Vandermonde factor is absorbed by the inner function.
        v *= detail::vandermonde(zs);
      } else {
        for (int j = 0; j < r; ++j)
          for (int i = 0; i < j; ++i) v *= std::pow(z[j] - z[i], al.beta);
      }
      return inner(zs, degree) * v;
    };
  };
  Estimate<Complex> est = integrate_tensor(paths, make, opt.integrate);
  const Complex scale = 1.0 / (factorial(r) * std::pow(kTwoPiI, r));
  est.value *= scale;
  est.error *= std::abs(scale);
  return est;
}

/// A circle for f00_rank_deficient. The result is of the size of an m-th
/// divided difference of e^(a z), m = beta (p - r + 1) / 2, so small a cancel
/// badly on a unit-scale circle; the radius grows towards the saddle m / max|a|
/// of e^(a R) R^-m. Where the inner function is a truncated series (r >= 2,
/// beta != 2) the radius is capped to keep that series accurate. Odd beta
/// with r >= 2 gets a circle about the origin. About 64 starting nodes.
inline ContourPath lemma_circle(const AlphaParam& al, const RankDeficientArg& A, std::span<const Complex> b) {
  if (static_cast<int>(b.size()) != A.p) throw InvalidArgument("b must have the ambient dimension");
  const int r = A.r();
  const double amax = detail::max_abs(A.block);
  const double order = al.beta * (A.p - r + 1) / 2.0;
  double radius_saddle = order / amax;
  if (r >= 2 && al.beta != 2) radius_saddle = std::min(radius_saddle, 18.0 / (r * amax));
  Complex center{};
  double reach = 0.0;
  if (al.odd() && r >= 2) {
    reach = detail::max_abs(b) + 0.8;
  } else {
    for (auto v : b) center += v;
    center /= static_cast<double>(b.size());
    for (auto v : b) reach = std::max(reach, std::abs(v - center) + 1.0);
  }
  const double radius = std::max(reach, radius_saddle);
  return circle_path(center, radius, 64.0 / (2.0 * kPi * radius));
}

/// Determinant of single contour integrals for alpha = 1:
/// (-1)^(r(r-1)/2) / V_r(block) prod_j (p-j)!/a_j^(p-r) det(I_ij) with
/// I_ij = (1/2 pi i) \oint e^{a_i z} z^(j-1) / prod_s (z - b_s) dz.
inline Estimate<Complex> corollary1_determinant(const RankDeficientArg& A, std::span<const Complex> b,
                                                const ContourPath& contour, const IntegrateOptions& opt = {}) {
  const int r = A.r(), p = A.p;
  if (static_cast<int>(b.size()) != p) throw InvalidArgument("b must have the ambient dimension");
  detail::require_distinct(A.block, "a");
  for (auto bs : b)
    if (contour.winding_number(bs) != 1) throw InvalidArgument("contour must wind once around every b_s");
  const Spectrum& a = A.block;
  auto ints = integrate_many(
      contour, static_cast<std::size_t>(r * r),
      [&](const NodeSet& ns) {
        return [&ns, &a, &b, r](std::size_t k, std::span<Complex> out) {
          const Complex z = ns.z[k];
          Complex den = 1.0;
          for (auto bs : b) den *= z - bs;
          for (int i = 0; i < r; ++i) {
            Complex t = std::exp(a[i] * z) / den;
            for (int j = 0; j < r; ++j) {
              out[i * r + j] = t;
              t *= z;
            }
          }
        };
      },
      opt);
  std::vector<Complex> m(r * r);
  std::vector<double> err(r * r);
  Estimate<Complex> out;
  for (int k = 0; k < r * r; ++k) {
    m[k] = ints[k].value / kTwoPiI;
    err[k] = ints[k].error / (2.0 * kPi);
    out.converged = out.converged && ints[k].converged;
    out.nodes = std::max(out.nodes, ints[k].nodes);
  }
  Complex pref = 1.0 / detail::vandermonde(a);
  if ((r * (r - 1) / 2) % 2 != 0) pref = -pref;
  for (int j = 1; j <= r; ++j) pref *= factorial(p - j) / std::pow(a[j - 1], p - r);
  out.value = pref * small_determinant(m, r);
  // First-order propagation through the cofactors.
  double e = 0.0;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      std::vector<Complex> minor;
      for (int ii = 0; ii < r; ++ii)
        for (int jj = 0; jj < r; ++jj)
          if (ii != i && jj != j) minor.push_back(m[ii * r + jj]);
      const Complex cof = r == 1 ? Complex{1.0} : small_determinant(std::move(minor), r - 1);
      e += std::abs(cof) * err[i * r + j];
    }
  }
  out.error = std::abs(pref) * e;
  return out;
}

/// Result of separating coincident entries.
struct Jittered {
  Spectrum values;
  bool jittered = false;
};

/// Moves entries that coincide (relative 1e-10) with an earlier entry by
/// a relative step of `rel`, so determinantal formulas stay defined.
inline Jittered separate_coincident(std::span<const Complex> x, double rel = 1e-6) {
  Jittered out{Spectrum(x.begin(), x.end()), false};
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    for (int step = 1;; ++step) {
      bool clash = false;
      for (std::size_t i = 0; i < j; ++i) {
        const double s = std::max({1e-300, std::abs(out.values[i]), std::abs(out.values[j])});
        if (std::abs(out.values[j] - out.values[i]) <= 1e-10 * s) clash = true;
      }
      if (!clash) break;
      const double mag = std::abs(x[j]) > 0.0 ? std::abs(x[j]) : 1.0;
      out.values[j] = x[j] + rel * step * mag;
      out.jittered = true;
    }
  }
  return out;
}

namespace detail {

/// Haar average of transform(sum_k rows_k sum_i b_i |F_ik|^2) where F is a
/// Haar p x q frame. Draws are split into fixed chunks with their own
/// generator streams and reduced in chunk order, so results do not depend
/// on the thread count.
template <typename Transform>
MonteCarloEstimate haar_frame_monte_carlo(const std::vector<double>& rows, std::span<const double> b,
                                          std::int64_t draws, std::uint64_t seed, unsigned threads,
                                          Transform&& transform) {
  if (draws < 1) throw InvalidArgument("draws must be positive");
  const int p = static_cast<int>(b.size());
  const int q = static_cast<int>(rows.size());
  if (q < 1 || q > p) throw InvalidArgument("frame width must lie in [1, p]");
  constexpr std::int64_t kChunk = 1 << 14;
  const std::int64_t chunks = (draws + kChunk - 1) / kChunk;
  struct Moments {
    double n = 0.0, mean = 0.0, m2 = 0.0;
  };
  std::vector<Moments> part(chunks);
  parallel_for(
      static_cast<std::size_t>(chunks),
      [&](std::size_t c) {
        Rng rng = stream_rng(seed, c);
        std::normal_distribution<double> g(0.0, std::sqrt(0.5));
        const std::int64_t count = std::min<std::int64_t>(kChunk, draws - static_cast<std::int64_t>(c) * kChunk);
        std::vector<Complex> f(static_cast<std::size_t>(p) * q);
        Moments mo;
        for (std::int64_t d = 0; d < count; ++d) {
          // Gram-Schmidt of Ginibre columns gives a Haar frame: R has a
          // positive diagonal by construction.
          for (int k = 0; k < q; ++k) {
            Complex* col = f.data() + static_cast<std::size_t>(k) * p;
            for (int i = 0; i < p; ++i) {
              const double re = g(rng);
              const double im = g(rng);
              col[i] = {re, im};
            }
            for (int l = 0; l < k; ++l) {
              const Complex* prev = f.data() + static_cast<std::size_t>(l) * p;
              Complex dot{};
              for (int i = 0; i < p; ++i) dot += std::conj(prev[i]) * col[i];
              for (int i = 0; i < p; ++i) col[i] -= dot * prev[i];
            }
            double nrm = 0.0;
            for (int i = 0; i < p; ++i) nrm += std::norm(col[i]);
            nrm = std::sqrt(nrm);
            for (int i = 0; i < p; ++i) col[i] /= nrm;
          }
          double ex = 0.0;
          for (int k = 0; k < q; ++k) {
            double quad = 0.0;
            for (int i = 0; i < p; ++i) quad += b[i] * std::norm(f[static_cast<std::size_t>(k) * p + i]);
            ex += rows[k] * quad;
          }
          const double v = transform(ex);
          mo.n += 1.0;
          const double delta = v - mo.mean;
          mo.mean += delta / mo.n;
          mo.m2 += delta * (v - mo.mean);
        }
        part[c] = mo;
      },
      threads);
  Moments tot;
  for (const auto& mo : part) {
    const double n = tot.n + mo.n;
    const double delta = mo.mean - tot.mean;
    tot.mean += delta * mo.n / n;
    tot.m2 += mo.m2 + delta * delta * tot.n * mo.n / n;
    tot.n = n;
  }
  MonteCarloEstimate est;
  est.draws = draws;
  est.mean = tot.mean;
  est.std_error = draws > 1 ? std::sqrt(tot.m2 / (tot.n - 1.0) / tot.n) : 0.0;
  return est;
}

}  // namespace detail

/// Haar average of exp(tr(A U B U*)) over the unitary group for real a, b.
inline MonteCarloEstimate hciz_monte_carlo(std::span<const double> a, std::span<const double> b, std::int64_t draws,
                                           std::uint64_t seed, unsigned threads = default_thread_count()) {
  if (a.size() != b.size() || a.empty()) throw InvalidArgument("spectra must have equal positive dimension");
  if (draws < 1) throw InvalidArgument("draws must be positive");
  std::vector<double> rows;
  for (double v : a)
    if (v != 0.0) rows.push_back(v);
  if (rows.empty()) return MonteCarloEstimate{1.0, 0.0, draws};
  return detail::haar_frame_monte_carlo(rows, b, draws, seed, threads, [](double ex) { return std::exp(ex); });
}

}  // namespace spikedet
