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
#include <map>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spikedet/contour.hpp"
#include "spikedet/core.hpp"
#include "spikedet/hciz.hpp"
#include "spikedet/mp.hpp"

namespace spikedet {

/// Saddle point of f_i and the first even coefficients of f_i there.
struct SaddleData {
  double h = 0.0;
  double c_p = 1.0;
  double z0 = 0.0;
  double f0 = 0.0;
  double f2 = 0.0;
};

inline void check_subcritical(double h, double c_p) {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("spike size must be positive");
  if (!(h < std::sqrt(c_p))) throw InvalidArgument("spike size must lie below sqrt(c_p)");
}

inline SaddleData saddle(double h, double c_p) {
  if (!(c_p > 0.0)) throw InvalidArgument("c_p must be positive");
  check_subcritical(h, c_p);
  SaddleData sd;
  sd.h = h;
  sd.c_p = c_p;
  sd.z0 = (1.0 + h) * (c_p + h) / h;
  sd.f0 = -c_p - (1.0 - c_p) * std::log1p(h) + c_p * std::log(c_p / h);
  sd.f2 = -h * h / (2.0 * (1.0 + h) * (1.0 + h) * (c_p - h * h));
  return sd;
}

/// f_i(z) = -(h z/(1+h) - c_p \int ln(z - lambda) dF_p).
inline Complex f_i(Complex z, double h, const MPLaw& law) {
  return -(h / (1.0 + h) * z - law.c * mp_log_potential(law, z));
}

/// g_j(z) = z^(j-1) exp(-Delta_p(z)), j >= 1.
inline Complex g_j(Complex z, int j, const EigenSample& sample, const MPLaw& law) {
  if (j < 1) throw InvalidArgument("g_j needs j >= 1");
  return std::pow(z, j - 1) * std::exp(-delta_p(sample, law, z));
}

namespace detail {

inline double weight_sum(std::span<const double> h) {
  double s = 0.0;
  for (double v : h) s += v / (1.0 + v);
  return s;
}

inline double mu_power(int n, int p, int r) { return static_cast<double>(p) * (n - r) + r * (r + 1) / 2.0; }

}  // namespace detail

/// log q_rho(z): the large negative power is taken in the log domain. rho is
/// a 0-based permutation of the spike indices.
inline Complex q_rho_log(std::span<const Complex> z, std::span<const int> rho, std::span<const double> h,
                         const EigenSample& sample) {
  const int r = static_cast<int>(h.size());
  if (static_cast<int>(z.size()) != r || static_cast<int>(rho.size()) != r)
    throw InvalidArgument("z and rho must have r entries");
  const double bound = sample.S / detail::weight_sum(h);
  Complex u{}, lin{};
  for (int j = 0; j < r; ++j) {
    if (!(z[j].real() < bound))
      throw InvalidArgument("contour must satisfy Re z < S / sum h/(1+h) (half-plane condition)");
    const double w = h[rho[j]] / (1.0 + h[rho[j]]);
    u += w * z[j] / sample.S;
    lin += static_cast<double>(sample.n) * w * z[j];
  }
  return -detail::mu_power(sample.n, sample.p, r) * std::log(1.0 - u) - lin;
}

inline Complex q_rho(std::span<const Complex> z, std::span<const int> rho, std::span<const double> h,
                     const EigenSample& sample) {
  return std::exp(q_rho_log(z, rho, h, sample));
}

enum class LRMethod { kExactContour, kLaplace };

inline const char* to_string(LRMethod m) { return m == LRMethod::kExactContour ? "exact-contour" : "laplace-asymptotic"; }

enum class LRVariant { kLambda, kMu };

inline const char* to_string(LRVariant v) { return v == LRVariant::kLambda ? "lambda" : "mu"; }

struct LRResult {
  double log_lr = 0.0;
  LRMethod method = LRMethod::kExactContour;
  /// Absolute error in log_lr: quadrature estimate for exact results, the
  /// nominal 1/n order for Laplace results.
  double error_estimate = 0.0;
  bool converged = true;
  bool jittered = false;
  /// Distance of the assembled phase from +1; exact results must be real
  /// and positive.
  double phase_error = 0.0;
  std::vector<double> h;
  double c_p = 0.0;
  int n = 0;
  int p = 0;
};

struct ExactOptions {
  IntegrateOptions integrate{1e-10, std::size_t{1} << 16, 1};
  /// Separate coincident spikes by a relative 1e-6 instead of failing.
  bool jitter = false;
  /// Use a rectangle around the eigenvalues instead of the steepest contours.
  bool rectangle = false;
};

inline constexpr int kMaxExactDimension = 2000;

namespace detail {

inline void check_law(const EigenSample& sample, const MPLaw& law) {
  if (std::abs(law.c - sample.c_p()) > 1e-9 * sample.c_p())
    throw InvalidArgument("law aspect ratio must equal p/n of the sample");
}

/// sum_s ln(z - lambda_s) over all p eigenvalues, structural zeros included.
inline Complex log_char_poly(const EigenSample& sample, Complex z) {
  Complex s{};
  for (double l : sample.lambda) s += std::log(z - l);
  const int zeros = sample.p - sample.m();
  if (zeros > 0) s += static_cast<double>(zeros) * std::log(z);
  return s;
}

/// Validated copy of h, with coincident entries separated if allowed.
inline std::vector<double> prepare_spikes(std::span<const double> h, double c_p, bool jitter, bool& jittered) {
  if (h.empty()) throw InvalidArgument("at least one spike is required");
  for (double v : h) check_subcritical(v, c_p);
  Spectrum hs(h.begin(), h.end());
  jittered = false;
  try {
    require_distinct(hs, "h");
  } catch (const DegenerateArgument&) {
    if (!jitter) throw DegenerateArgument("coincident spikes; separate them with separate_coincident or enable jitter");
    const auto j = separate_coincident(hs);
    hs = j.values;
    jittered = j.jittered;
  }
  std::vector<double> out;
  for (auto v : hs) out.push_back(v.real());
  for (double v : out) check_subcritical(v, c_p);
  return out;
}

/// log |k_1| and its sign.
inline double log_k1(std::span<const double> h, int n, int p, double& sign) {
  const int r = static_cast<int>(h.size());
  double lk = -(static_cast<double>(p) * r - r * (r + 1) / 2.0) * std::log(static_cast<double>(n));
  sign = (r * (r - 1) / 2) % 2 == 0 ? 1.0 : -1.0;
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < i; ++j) {
      const double d = h[i] - h[j];
      lk -= std::log(std::abs(d));
      if (d < 0.0) sign = -sign;
    }
  }
  for (int t = 1; t <= r; ++t) {
    const double ht = h[t - 1];
    lk += (r - p) * std::log(ht) + (p - n - 1.0) * std::log1p(ht) + log_factorial(p - t);
  }
  return lk;
}

/// Real part of log of e^{n w z} / prod_s (z - lambda_s).
inline double log_row_integrand(const EigenSample& sample, double nw, Complex z) {
  return nw * z.real() - log_char_poly(sample, z).real();
}

}  // namespace detail

/// Closed contour through the saddle of spike h: right edge at
/// max(z0, lambda_1 + margin) (capped by `right_cap`), horizontal edges at
/// +-3 x_R and a closing edge far enough left for the integrand to be
/// negligible there.
inline SteepestContour lr_steepest_contour(const SaddleData& sd, const EigenSample& sample,
                                           double right_cap = std::numeric_limits<double>::infinity()) {
  const double lam1 = sample.lambda.empty() ? 0.0 : sample.lambda.front();
  const double margin = std::max(0.05, 0.02 * lam1);
  double xr = std::max(sd.z0, lam1 + margin);
  if (xr >= right_cap) {
    xr = 0.5 * (lam1 + right_cap);
    if (!(xr > lam1)) throw InvalidArgument("no admissible contour left of the half-plane bound");
  }
  const double height = 3.0 * xr;
  const double nw = sample.n * sd.h / (1.0 + sd.h);
  const double scale = std::min(height / 4.0, 1.0 / std::sqrt(sample.n * std::abs(sd.f2)));
  const double ref = detail::log_row_integrand(sample, nw, xr);
  const double floor = -10.0 * xr;
  double xl = -std::max(1.0, 0.5 * xr);
  while (xl > floor && detail::log_row_integrand(sample, nw, Complex{xl, height}) - ref > std::log(1e-18)) xl *= 1.5;
  xl = std::max(xl, floor);
  return steepest_contour(sd.z0, xr, height, xl, scale, 1);
}

/// Exact log L(h; lambda) as k_1 det((1/2 pi i) \oint e^{-n f_i} g_j dz).
/// Entries reduce to e^{n w_i z} z^(j-1) / prod_s (z - lambda_s) with
/// w_i = h_i/(1+h_i); each row is scaled by its integrand at the right edge.
inline LRResult lr_lambda_exact(std::span<const double> h_in, const EigenSample& sample, const MPLaw& law,
                                const ExactOptions& opt = {}) {
  detail::check_law(sample, law);
  if (sample.p > kMaxExactDimension) throw InvalidArgument("exact likelihood ratio limited to p <= 2000");
  if (h_in.size() > static_cast<std::size_t>(kMaxContourRank)) throw InvalidArgument("exact lambda ratio needs r <= 3");
  LRResult res;
  res.method = LRMethod::kExactContour;
  const double c_p = sample.c_p();
  res.h = detail::prepare_spikes(h_in, c_p, opt.jitter, res.jittered);
  res.c_p = c_p;
  res.n = sample.n;
  res.p = sample.p;
  const auto& h = res.h;
  const int r = static_cast<int>(h.size());

  ContourPath rect;
  if (opt.rectangle) {
    std::vector<Complex> pts(sample.lambda.begin(), sample.lambda.end());
    pts.emplace_back(0.0, 0.0);
    rect = encircle_points(pts, 0.5);
  }
  std::vector<Complex> m(r * r);
  std::vector<double> err(r * r), ref(r);
  for (int i = 0; i < r; ++i) {
    const double nw = sample.n * h[i] / (1.0 + h[i]);
    const ContourPath path = opt.rectangle ? rect : lr_steepest_contour(saddle(h[i], c_p), sample).path;
    const double xr = path.pieces().front().from.real();
    ref[i] = detail::log_row_integrand(sample, nw, xr);
    const double shift = ref[i];
    auto ints = integrate_many(
        path, static_cast<std::size_t>(r),
        [&](const NodeSet& ns) {
          return [&ns, &sample, nw, shift, r](std::size_t k, std::span<Complex> out) {
            const Complex z = ns.z[k];
            Complex t = std::exp(nw * z - detail::log_char_poly(sample, z) - shift);
            for (int j = 0; j < r; ++j) {
              out[j] = t;
              t *= z;
            }
          };
        },
        opt.integrate);
    for (int j = 0; j < r; ++j) {
      m[i * r + j] = ints[j].value / kTwoPiI;
      err[i * r + j] = ints[j].error / (2.0 * kPi);
      res.converged = res.converged && ints[j].converged;
    }
  }
  const Complex det = small_determinant(m, r);
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
  double sign = 1.0;
  const double lk = detail::log_k1(h, sample.n, sample.p, sign);
  const LogValue ld = log_value(det);
  res.log_lr = lk + std::accumulate(ref.begin(), ref.end(), 0.0) + ld.log_abs;
  res.phase_error = std::abs(sign * ld.phase - 1.0);
  res.error_estimate = e / std::abs(det);
  return res;
}

/// Exact log L(h; mu): k_2 times the signed sum over permutations of r-fold
/// contour integrals. After cancelling the exponentials the integrand is
/// (1 - sum_j w_rho(j) z_j / S)^(-N) prod_j z_j^(j-1) / prod_s (z_j - lambda_s)
/// with N = p(n - r) + r(r+1)/2.
inline LRResult lr_mu_exact(std::span<const double> h_in, const EigenSample& sample, const MPLaw& law,
                            const ExactOptions& opt = {}) {
  detail::check_law(sample, law);
  if (sample.p > kMaxExactDimension) throw InvalidArgument("exact likelihood ratio limited to p <= 2000");
  if (h_in.size() > 2) throw InvalidArgument("exact mu ratio needs r <= 2");
  LRResult res;
  res.method = LRMethod::kExactContour;
  const double c_p = sample.c_p();
  res.h = detail::prepare_spikes(h_in, c_p, opt.jitter, res.jittered);
  res.c_p = c_p;
  res.n = sample.n;
  res.p = sample.p;
  const auto& h = res.h;
  const int r = static_cast<int>(h.size());
  const double S = sample.S;
  const double bound = S / detail::weight_sum(h);
  const double big_n = detail::mu_power(sample.n, sample.p, r);

  std::vector<ContourPath> paths(r);
  for (int i = 0; i < r; ++i) {
    if (opt.rectangle) {
      std::vector<Complex> pts(sample.lambda.begin(), sample.lambda.end());
      pts.emplace_back(0.0, 0.0);
      paths[i] = encircle_points(pts, 0.5);
      for (const auto& pc : paths[i].pieces())
        if (std::max(pc.from.real(), pc.to.real()) >= bound)
          throw InvalidArgument("rectangle violates the half-plane condition");
    } else {
      paths[i] = lr_steepest_contour(saddle(h[i], c_p), sample, bound).path;
    }
  }

  std::vector<int> rho(r);
  std::iota(rho.begin(), rho.end(), 0);
  struct Term {
    double sign, ref;
    Estimate<Complex> est;
  };
  std::vector<Term> terms;
  do {
    int inversions = 0;
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b)
        if (rho[a] > rho[b]) ++inversions;
    std::vector<double> w(r), xr(r);
    std::vector<ContourPath> dims(r);
    for (int j = 0; j < r; ++j) {
      w[j] = h[rho[j]] / (1.0 + h[rho[j]]);
      dims[j] = paths[rho[j]];
      xr[j] = dims[j].pieces().front().from.real();
    }
    auto log_integrand = [&, r](const Complex* z, const Complex* log_g) {
      Complex u{};
      for (int j = 0; j < r; ++j) u += w[j] * z[j] / S;
      Complex v = -big_n * std::log(1.0 - u);
      for (int j = 0; j < r; ++j) v += log_g[j];
      return v;
    };
    auto log_g_at = [&](Complex z, int j) {
      return static_cast<double>(j) * std::log(z) - detail::log_char_poly(sample, z);
    };
    Complex zr[2], lg[2];
    for (int j = 0; j < r; ++j) {
      zr[j] = xr[j];
      lg[j] = log_g_at(zr[j], j);
    }
    const double ref = log_integrand(zr, lg).real();
    auto make = [&](const std::vector<NodeSet>& sets) {
      std::vector<std::vector<Complex>> logs(r);
      for (int j = 0; j < r; ++j) {
        logs[j].resize(sets[j].size());
        for (std::size_t k = 0; k < sets[j].size(); ++k) logs[j][k] = log_g_at(sets[j].z[k], j);
      }
      return [&sets, logs = std::move(logs), &log_integrand, ref, r](std::span<const std::size_t> idx) {
        Complex z[2], l[2];
        for (int j = 0; j < r; ++j) {
          z[j] = sets[j].z[idx[j]];
          l[j] = logs[j][idx[j]];
        }
        return std::exp(log_integrand(z, l) - ref);
      };
    };
    IntegrateOptions io = opt.integrate;
    terms.push_back({inversions % 2 == 0 ? 1.0 : -1.0, ref, integrate_tensor(dims, make, io)});
  } while (std::next_permutation(rho.begin(), rho.end()));

  double top = -std::numeric_limits<double>::infinity();
  for (const auto& t : terms) top = std::max(top, t.ref);
  Complex sum{};
  double e = 0.0;
  for (const auto& t : terms) {
    const double s = std::exp(t.ref - top);
    sum += t.sign * s * t.est.value;
    e += s * t.est.error;
    res.converged = res.converged && t.est.converged;
  }
  const Complex scale = std::pow(kTwoPiI, -r);
  sum *= scale;
  e *= std::abs(scale);
  double sign = 1.0;
  double lk = detail::log_k1(h, sample.n, sample.p, sign);
  lk += (static_cast<double>(sample.p) * r - r * (r + 1) / 2.0) * std::log(sample.n * S);
  lk += std::lgamma(big_n) - std::lgamma(static_cast<double>(sample.n) * sample.p);
  const LogValue ls = log_value(sum);
  res.log_lr = lk + top + ls.log_abs;
  res.phase_error = std::abs(sign * ls.phase - 1.0);
  res.error_estimate = e / std::abs(sum);
  return res;
}

/// Means and covariance of the Gaussian limit of log L at h and h_tilde.
struct LimitMoments {
  double mean = 0.0;
  double cov = 0.0;
};

inline LimitMoments limit_process_moments(std::span<const double> h, std::span<const double> h_tilde, double c,
                                          LRVariant variant) {
  if (!(c > 0.0)) throw InvalidArgument("c must be positive");
  const double root = std::sqrt(c);
  for (double v : h)
    if (!(v >= 0.0 && v < root)) throw InvalidArgument("spike sizes must lie in [0, sqrt(c))");
  for (double v : h_tilde)
    if (!(v >= 0.0 && v < root)) throw InvalidArgument("spike sizes must lie in [0, sqrt(c))");
  const bool mu = variant == LRVariant::kMu;
  auto term = [&](double x) { return std::log1p(-x / c) + (mu ? x / c : 0.0); };
  LimitMoments out;
  for (double a : h)
    for (double b : h) out.mean += 0.5 * term(a * b);
  for (double a : h)
    for (double b : h_tilde) out.cov -= term(a * b);
  return out;
}

/// Laplace forms of log L with the Marchenko-Pastur log-potential at the
/// saddles cached by spike size, so that many samples and grids share it.
class LaplaceEvaluator {
 public:
  explicit LaplaceEvaluator(const MPLaw& law) : law_(law) {}

  const MPLaw& law() const { return law_; }

  double log_potential_at_saddle(double h) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      const auto it = cache_.find(h);
      if (it != cache_.end()) return it->second;
    }
    const double v = mp_log_potential(law_, saddle(h, law_.c).z0).real();
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(h, v);
    return v;
  }

  /// -Delta_p(z0(h)); real whenever z0 lies right of the sample.
  double minus_delta(double h, const EigenSample& sample) const {
    const double z0 = saddle(h, law_.c).z0;
    double s = 0.0;
    for (double l : sample.lambda) s += std::log(std::abs(z0 - l));
    const int zeros = sample.p - sample.m();
    if (zeros > 0) s += zeros * std::log(z0);
    return -(s - sample.p * log_potential_at_saddle(h));
  }

  LRResult evaluate(std::span<const double> h, const EigenSample& sample, LRVariant variant) const {
    detail::check_law(sample, law_);
    if (h.empty()) throw InvalidArgument("at least one spike is required");
    for (double v : h) check_subcritical(v, law_.c);
    LRResult res;
    res.method = LRMethod::kLaplace;
    res.h.assign(h.begin(), h.end());
    res.c_p = law_.c;
    res.n = sample.n;
    res.p = sample.p;
    res.error_estimate = 1.0 / sample.n;
    const double c = law_.c;
    double v = 0.0;
    for (double hi : h) v += minus_delta(hi, sample);
    double hsum = 0.0;
    for (double a : h) {
      hsum += a;
      for (double b : h) v += 0.5 * (std::log1p(-a * b / c) + (variant == LRVariant::kMu ? a * b / c : 0.0));
    }
    if (variant == LRVariant::kMu) v -= (sample.S - sample.p) / c * hsum;
    res.log_lr = v;
    return res;
  }

 private:
  MPLaw law_;
  mutable std::mutex mu_;
  mutable std::map<double, double> cache_;
};

inline LRResult lr_lambda_laplace(std::span<const double> h, const EigenSample& sample, const MPLaw& law) {
  return LaplaceEvaluator(law).evaluate(h, sample, LRVariant::kLambda);
}

inline LRResult lr_mu_laplace(std::span<const double> h, const EigenSample& sample, const MPLaw& law) {
  return LaplaceEvaluator(law).evaluate(h, sample, LRVariant::kMu);
}

/// Leading steepest-descent term of the entry (1/2 pi i) \oint_{K_i} e^{-n f_i} g_j dz,
/// e^{-n f_i0} g_j(z_i0) pi^(1/2) / (f_i2^(1/2) n^(1/2)) / (2 pi i), as a
/// complex log. The square root of the negative f_i2 uses (-1)^(1/2) = -i.
inline Complex watson_entry_log(double h, int j, const EigenSample& sample, const MPLaw& law) {
  const SaddleData sd = saddle(h, law.c);
  const Complex sqrt_f2 = Complex{0.0, -1.0} * std::sqrt(-sd.f2);
  const Complex log_g = static_cast<double>(j - 1) * std::log(sd.z0) - delta_p(sample, law, sd.z0);
  return -static_cast<double>(sample.n) * sd.f0 + log_g + 0.5 * std::log(kPi) - std::log(sqrt_f2) -
         0.5 * std::log(static_cast<double>(sample.n)) - std::log(kTwoPiI);
}

/// log of k_1 det(leading terms), kept complex so the branch convention
/// can be checked: the imaginary part vanishes for real data.
inline Complex lr_lambda_watson_log(std::span<const double> h, const EigenSample& sample, const MPLaw& law) {
  detail::check_law(sample, law);
  const int r = static_cast<int>(h.size());
  bool jittered = false;
  const auto hs = detail::prepare_spikes(h, law.c, false, jittered);
  std::vector<Complex> logs(r * r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) logs[i * r + j] = watson_entry_log(hs[i], j + 1, sample, law);
  const LogValue ld = detail::log_det_from_logs(logs, r);
  double sign = 1.0;
  const double lk = detail::log_k1(hs, sample.n, sample.p, sign);
  return Complex{lk + ld.log_abs, 0.0} + std::log(sign * ld.phase);
}

/// Monte Carlo estimate of L(h; lambda) or L(h; mu) from the Haar-integral
/// representation. The mu case uses the closed-form s-integral
/// \int s^(np-1) e^{-ns(1-t)} ds = Gamma(np) / (n(1-t))^(np).
inline MonteCarloEstimate lr_monte_carlo(std::span<const double> h, const EigenSample& sample, LRVariant variant,
                                         std::int64_t draws, std::uint64_t seed,
                                         unsigned threads = default_thread_count()) {
  if (h.empty()) throw InvalidArgument("at least one spike is required");
  for (double v : h)
    if (!(v > 0.0)) throw InvalidArgument("spike sizes must be positive");
  const int n = sample.n, p = sample.p;
  double log_pref = 0.0;
  for (double v : h) log_pref -= n * std::log1p(v);
  std::vector<double> b(p, 0.0);
  std::copy(sample.lambda.begin(), sample.lambda.end(), b.begin());
  std::vector<double> rows;
  if (variant == LRVariant::kLambda) {
    for (double v : h) rows.push_back(n * v / (1.0 + v));
    return detail::haar_frame_monte_carlo(rows, b, draws, seed, threads,
                                          [log_pref](double ex) { return std::exp(ex + log_pref); });
  }
  for (auto& v : b) v /= sample.S;
  for (double v : h) rows.push_back(v / (1.0 + v));
  const double np = static_cast<double>(n) * p;
  return detail::haar_frame_monte_carlo(rows, b, draws, seed, threads, [log_pref, np](double t) {
    return std::exp(-np * std::log1p(-t) + log_pref);
  });
}

}  // namespace spikedet
