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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spikedet/core.hpp"
#include "spikedet/likelihood.hpp"
#include "spikedet/randmat.hpp"

namespace spikedet {

// ---------------------------------------------------------------------------
// Standard normal distribution

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse of normal_cdf: a rational starting value refined by one Halley
/// step against erfc.
inline double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw InvalidArgument("probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (u < lo) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - lo) {
    const double q = u - 0.5, t = q * q;
    x = (((((a[0] * t + a[1]) * t + a[2]) * t + a[3]) * t + a[4]) * t + a[5]) * q /
        (((((b[0] * t + b[1]) * t + b[2]) * t + b[3]) * t + b[4]) * t + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step; the residual is taken on the smaller tail for accuracy.
  const double e = u < 0.5 ? normal_cdf(x) - u : (1.0 - u) - 0.5 * std::erfc(x / std::numbers::sqrt2);
  const double g = e * std::sqrt(2.0 * kPi) * std::exp(0.5 * x * x);
  return x - g / (1.0 + 0.5 * x * g);
}

// ---------------------------------------------------------------------------
// Power envelopes and point-optimal critical values

struct EnvelopePoint {
  std::vector<double> h;
  double c = 1.0;
  double alpha_size = 0.05;
  LRVariant variant = LRVariant::kLambda;
  double W = 0.0;
  double beta = 0.0;
};

namespace detail {

inline void check_size(double alpha_size) {
  if (!(alpha_size > 0.0 && alpha_size < 1.0)) throw InvalidArgument("test size must lie in (0, 1)");
}

}  // namespace detail

inline EnvelopePoint envelope(std::span<const double> h, double c, double alpha_size, LRVariant variant) {
  detail::check_size(alpha_size);
  EnvelopePoint e;
  e.h.assign(h.begin(), h.end());
  e.c = c;
  e.alpha_size = alpha_size;
  e.variant = variant;
  e.W = std::max(0.0, limit_process_moments(h, h, c, variant).cov);
  e.beta = 1.0 - normal_cdf(normal_quantile(1.0 - alpha_size) - std::sqrt(e.W));
  return e;
}

/// Critical value of the point-optimal test against h: reject when
/// log L(h) exceeds sqrt(W) z_(1-alpha) + m(h).
inline double np_critical_value(std::span<const double> h, double c, double alpha_size, LRVariant variant) {
  detail::check_size(alpha_size);
  const LimitMoments m = limit_process_moments(h, h, c, variant);
  return std::sqrt(std::max(0.0, m.cov)) * normal_quantile(1.0 - alpha_size) + m.mean;
}

// ---------------------------------------------------------------------------
// Gaussian limit field on a grid of spike vectors

/// Upper grid bound sqrt(c (1 - e^-36)).
inline double boundary_preset(double c) { return std::sqrt(c * -std::expm1(-36.0)); }

struct FieldGrid {
  int r = 1;
  double c = 1.0;
  LRVariant variant = LRVariant::kLambda;
  std::vector<std::vector<double>> points;
  std::vector<double> mean;
  Eigen::MatrixXd cov;

  std::size_t size() const { return points.size(); }
};

/// Grid on explicit spike vectors (all of length r).
inline FieldGrid make_field_grid(std::vector<std::vector<double>> points, double c, LRVariant variant) {
  if (points.empty()) throw InvalidArgument("grid must contain at least one point");
  FieldGrid g;
  g.r = static_cast<int>(points.front().size());
  if (g.r < 1) throw InvalidArgument("spike vectors must be non-empty");
  for (const auto& pt : points)
    if (static_cast<int>(pt.size()) != g.r) throw InvalidArgument("grid spike vectors must share one length");
  g.c = c;
  g.variant = variant;
  g.points = std::move(points);
  const std::size_t k = g.points.size();
  g.mean.resize(k);
  g.cov.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a; b < k; ++b) {
      const LimitMoments m = limit_process_moments(g.points[a], g.points[b], c, variant);
      g.cov(a, b) = g.cov(b, a) = m.cov;
      if (a == b) g.mean[a] = m.mean;
    }
  }
  return g;
}

/// Uniform grid with `points_per_axis` values in [0, h_bar] per spike.
/// Log L is symmetric in the spikes, so only non-decreasing tuples are kept.
inline FieldGrid make_field_grid(int r, double c, double h_bar, int points_per_axis, LRVariant variant) {
  if (r < 1) throw InvalidArgument("r must be positive");
  if (points_per_axis < 2) throw InvalidArgument("grid needs at least two points per axis");
  if (!(h_bar > 0.0 && h_bar < std::sqrt(c))) throw InvalidArgument("grid bound must lie in (0, sqrt(c))");
  std::vector<double> axis(points_per_axis);
  for (int i = 0; i < points_per_axis; ++i) axis[i] = h_bar * i / (points_per_axis - 1);
  std::vector<std::vector<double>> pts;
  std::vector<int> idx(r, 0);
  while (true) {
    std::vector<double> pt(r);
    for (int i = 0; i < r; ++i) pt[i] = axis[idx[i]];
    pts.push_back(std::move(pt));
    int k = r - 1;
    while (k >= 0 && idx[k] == points_per_axis - 1) --k;
    if (k < 0) break;
    ++idx[k];
    for (int i = k + 1; i < r; ++i) idx[i] = idx[k];
  }
  return make_field_grid(std::move(pts), c, variant);
}

/// Draws of the Gaussian field on a grid through a spectral square root of
/// its covariance.
class FieldSampler {
 public:
  static constexpr double kPsdTolerance = 1e-8;
  static constexpr double kEigenFloor = 1e-12;

  explicit FieldSampler(const FieldGrid& grid) : mean_(grid.mean), fixed_(grid.mean.size()) {
    for (std::size_t i = 0; i < fixed_.size(); ++i) fixed_[i] = grid.cov(i, i) == 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(grid.cov);
    if (es.info() != Eigen::Success) throw ConvergenceError("field covariance eigen-decomposition failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    if (ev.size() > 0 && ev(0) < -kPsdTolerance)
      throw DegenerateArgument("field covariance is not positive semidefinite; coarsen the grid or lower its bound");
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev(i) > kEigenFloor) keep.push_back(i);
    factor_.resize(ev.size(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
      factor_.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]) * std::sqrt(ev(keep[j]));
  }

  std::size_t size() const { return mean_.size(); }
  Eigen::Index rank() const { return factor_.cols(); }

  void draw(Rng& rng, std::span<double> out) const {
    std::normal_distribution<double> nd;
    Eigen::VectorXd z(factor_.cols());
    for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = nd(rng);
    const Eigen::VectorXd v = factor_ * z;
    for (std::size_t i = 0; i < mean_.size(); ++i) out[i] = mean_[i] + (fixed_[i] ? 0.0 : v(static_cast<Eigen::Index>(i)));
  }

 private:
  std::vector<double> mean_;
  std::vector<bool> fixed_;  // zero-variance points, e.g. h = 0
  Eigen::MatrixXd factor_;
};

/// Empirical law of 2 sup_h L(h) over the grid.
struct FieldDistribution {
  std::vector<double> sup2;  // sorted

  double quantile(double u) const {
    if (sup2.empty()) throw InvalidArgument("empty field distribution");
    if (!(u >= 0.0 && u <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    const double pos = u * static_cast<double>(sup2.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= sup2.size()) return sup2.back();
    return sup2[i] + (pos - static_cast<double>(i)) * (sup2[i + 1] - sup2[i]);
  }

  double critical_value(double alpha_size) const {
    detail::check_size(alpha_size);
    return quantile(1.0 - alpha_size);
  }

  /// Monte Carlo p-value (1 + #{sup2 >= stat}) / (1 + draws).
  double p_value(double stat) const {
    const auto above = static_cast<double>(sup2.end() - std::lower_bound(sup2.begin(), sup2.end(), stat - tie(stat)));
    return (1.0 + above) / (1.0 + static_cast<double>(sup2.size()));
  }

  /// P-value with ties broken by u in [0, 1]: the sup has an atom at zero
  /// when the grid contains h = 0, and uniform u makes the null law of the
  /// p-value uniform.
  double randomized_p_value(double stat, double u) const {
    const auto lo = std::lower_bound(sup2.begin(), sup2.end(), stat - tie(stat));
    const auto hi = std::upper_bound(sup2.begin(), sup2.end(), stat + tie(stat));
    const auto greater = static_cast<double>(sup2.end() - hi), equal = static_cast<double>(hi - lo);
    return (greater + u * (equal + 1.0)) / (1.0 + static_cast<double>(sup2.size()));
  }

 private:
  static double tie(double stat) { return 1e-12 * std::max(1.0, std::abs(stat)); }
};

inline FieldDistribution simulate_limit_field(const FieldGrid& grid, std::size_t draws, std::uint64_t seed,
                                              unsigned threads = default_thread_count()) {
  if (draws == 0) throw InvalidArgument("draws must be positive");
  const FieldSampler sampler(grid);
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (draws + kChunk - 1) / kChunk;
  FieldDistribution out;
  out.sup2.resize(draws);
  parallel_for(
      chunks,
      [&](std::size_t ch) {
        Rng rng = stream_rng(seed, ch);
        std::vector<double> v(sampler.size());
        const std::size_t end = std::min(draws, (ch + 1) * kChunk);
        for (std::size_t i = ch * kChunk; i < end; ++i) {
          sampler.draw(rng, v);
          out.sup2[i] = 2.0 * *std::max_element(v.begin(), v.end());
        }
      },
      threads);
  std::sort(out.sup2.begin(), out.sup2.end());
  return out;
}

// ---------------------------------------------------------------------------
// Tests applied to eigenvalue data

enum class TestKind { kLRLambda, kLRMu, kPointOptimal };

inline std::string to_string(TestKind t) {
  switch (t) {
    case TestKind::kLRLambda: return "lr-lambda";
    case TestKind::kLRMu: return "lr-mu";
    case TestKind::kPointOptimal: return "point-optimal";
  }
  return "unknown";
}

/// Sup-LR test on the Laplace form of log L over a field grid. Grid points
/// whose saddle does not lie right of the largest eigenvalue are skipped.
class SupLRTest {
 public:
  SupLRTest(FieldGrid grid, double critical_value)
      : grid_(std::move(grid)), critical_(critical_value), eval_(std::make_shared<LaplaceEvaluator>(MPLaw(grid_.c))) {
    for (const auto& pt : grid_.points)
      for (double v : pt)
        if (v > 0.0 && std::find(axis_.begin(), axis_.end(), v) == axis_.end()) axis_.push_back(v);
    std::sort(axis_.begin(), axis_.end());
    z0_.resize(axis_.size());
    for (std::size_t i = 0; i < axis_.size(); ++i) z0_[i] = saddle(axis_[i], grid_.c).z0;
  }

  const FieldGrid& grid() const { return grid_; }
  double critical_value() const { return critical_; }

  /// 2 sup_h log L(h).
  double statistic(const EigenSample& sample) const {
    const double lam1 = sample.lambda.empty() ? 0.0 : sample.lambda.front();
    std::vector<double> d(axis_.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < axis_.size(); ++i)
      if (z0_[i] > lam1) d[i] = eval_->minus_delta(axis_[i], sample);
    const bool mu = grid_.variant == LRVariant::kMu;
    const double c = grid_.c;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& pt : grid_.points) {
      double v = 0.0, hsum = 0.0;
      bool ok = true;
      for (double a : pt) {
        if (a == 0.0) continue;
        const double di = d[static_cast<std::size_t>(std::lower_bound(axis_.begin(), axis_.end(), a) - axis_.begin())];
        if (std::isnan(di)) {
          ok = false;
          break;
        }
        v += di;
        hsum += a;
        for (double b : pt) v += 0.5 * (std::log1p(-a * b / c) + (mu ? a * b / c : 0.0));
      }
      if (!ok) continue;
      if (mu) v -= (sample.S - sample.p) / c * hsum;
      best = std::max(best, v);
    }
    return 2.0 * best;
  }

  bool rejects(const EigenSample& sample) const { return statistic(sample) > critical_; }

 private:
  FieldGrid grid_;
  double critical_;
  std::shared_ptr<LaplaceEvaluator> eval_;
  std::vector<double> axis_;
  std::vector<double> z0_;
};

/// Point-optimal test against a fixed alternative h on the Laplace form.
class PointOptimalTest {
 public:
  PointOptimalTest(std::vector<double> h, double c, double alpha_size, LRVariant variant)
      : h_(std::move(h)),
        variant_(variant),
        critical_(np_critical_value(h_, c, alpha_size, variant)),
        eval_(std::make_shared<LaplaceEvaluator>(MPLaw(c))) {
    for (double v : h_)
      if (!(v > 0.0)) throw InvalidArgument("point-optimal alternative must have positive spikes");
  }

  const std::vector<double>& h() const { return h_; }
  double critical_value() const { return critical_; }
  double statistic(const EigenSample& sample) const { return eval_->evaluate(h_, sample, variant_).log_lr; }
  bool rejects(const EigenSample& sample) const { return statistic(sample) > critical_; }

 private:
  std::vector<double> h_;
  LRVariant variant_;
  double critical_;
  std::shared_ptr<LaplaceEvaluator> eval_;
};

// ---------------------------------------------------------------------------
// Monte Carlo power curves

struct PowerOptions {
  double alpha_size = 0.05;
  /// Upper grid bound for the sup-LR tests; defaults to 0.7 sqrt(c).
  std::optional<double> h_bar;
  int points_per_axis = 25;
  std::size_t field_draws = 100000;
  /// Alternative of the point-optimal test; defaults to each row's own h.
  std::vector<double> target;
  LRVariant point_variant = LRVariant::kLambda;
  unsigned threads = default_thread_count();
};

struct PowerRow {
  std::vector<double> h;
  std::size_t replications = 0;
  std::size_t rejections = 0;
  double rate = 0.0;
  double std_error = 0.0;
  double envelope = 0.0;
  double critical_value = 0.0;
};

inline double default_h_bar(double c) { return 0.7 * std::sqrt(c); }

inline SupLRTest make_sup_lr_test(int r, double c, LRVariant variant, const PowerOptions& opt, std::uint64_t seed) {
  const FieldGrid grid = make_field_grid(r, c, opt.h_bar.value_or(default_h_bar(c)), opt.points_per_axis, variant);
  const FieldDistribution fd = simulate_limit_field(grid, opt.field_draws, splitmix64(seed ^ 0x6669656c64ULL), opt.threads);
  return SupLRTest(grid, fd.critical_value(opt.alpha_size));
}

/// Rejection frequency per alternative, with binomial standard errors.
/// Replication i of row k uses random stream k * replications + i.
inline std::vector<PowerRow> power_curve(const std::vector<std::vector<double>>& h_grid, double c, int n, int p,
                                         TestKind test, std::size_t replications, std::uint64_t seed,
                                         const PowerOptions& opt = {}) {
  if (h_grid.empty()) throw InvalidArgument("at least one alternative is required");
  if (replications == 0) throw InvalidArgument("replications must be positive");
  if (n < 1 || p < 1) throw InvalidArgument("dimensions must be positive");
  if (std::abs(c - static_cast<double>(p) / n) > 1e-12 * c) throw InvalidArgument("c must equal p / n");
  const int r = static_cast<int>(h_grid.front().size());
  for (const auto& h : h_grid) {
    if (static_cast<int>(h.size()) != r) throw InvalidArgument("alternatives must share one spike count");
    for (double v : h)
      if (v != 0.0) check_subcritical(v, c);
  }
  std::optional<SupLRTest> lr;
  LRVariant variant = opt.point_variant;
  if (test != TestKind::kPointOptimal) {
    variant = test == TestKind::kLRMu ? LRVariant::kMu : LRVariant::kLambda;
    lr.emplace(make_sup_lr_test(r, c, variant, opt, seed));
  }
  std::vector<PowerRow> rows;
  for (std::size_t k = 0; k < h_grid.size(); ++k) {
    const auto& h = h_grid[k];
    std::optional<PointOptimalTest> po;
    if (test == TestKind::kPointOptimal) {
      const std::vector<double>& t = opt.target.empty() ? h : opt.target;
      po.emplace(t, c, opt.alpha_size, variant);
    }
    std::vector<unsigned char> rej(replications);
    SpikeParams sp;
    sp.h = h;
    sp.n = n;
    sp.p = p;
    parallel_for(
        replications,
        [&](std::size_t i) {
          const EigenSample s = sample_spiked_eigs(sp, seed, k * replications + i);
          rej[i] = lr ? lr->rejects(s) : po->rejects(s);
        },
        opt.threads);
    PowerRow row;
    row.h = h;
    row.replications = replications;
    for (unsigned char x : rej) row.rejections += x;
    row.rate = static_cast<double>(row.rejections) / replications;
    row.std_error = std::sqrt(row.rate * (1.0 - row.rate) / replications);
    row.envelope = envelope(h, c, opt.alpha_size, variant).beta;
    row.critical_value = lr ? lr->critical_value() : po->critical_value();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace spikedet
