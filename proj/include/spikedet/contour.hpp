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

#include <functional>
#include <span>
#include <vector>

#include "spikedet/core.hpp"

namespace spikedet {

/// Quadrature nodes of a path at one refinement level: z_k and the complex
/// weights w_k such that sum_k w_k f(z_k) approximates the path integral.
struct NodeSet {
  std::vector<Complex> z;
  std::vector<Complex> w;
  std::size_t size() const { return z.size(); }
};

/// Straight segment or circular arc, traversed from start to end.
struct ContourPiece {
  enum class Kind { kLine, kArc };
  Kind kind = Kind::kLine;
  Complex from{}, to{};  // line endpoints
  Complex center{};      // arc data
  double radius = 0.0;
  double theta0 = 0.0, theta1 = 0.0;
  int panels = 1;  // Gauss-Legendre panels at level 0, or trapezoid nodes for a full circle

  bool full_circle() const {
    return kind == Kind::kArc && std::abs(std::abs(theta1 - theta0) - 2.0 * kPi) < 1e-14;
  }
  double length() const {
    return kind == Kind::kLine ? std::abs(to - from) : radius * std::abs(theta1 - theta0);
  }
  Complex point(double t) const {  // t in [0, 1]
    if (kind == Kind::kLine) return from + t * (to - from);
    const double th = theta0 + t * (theta1 - theta0);
    return center + radius * Complex{std::cos(th), std::sin(th)};
  }
  Complex derivative(double t) const {
    if (kind == Kind::kLine) return to - from;
    const double th = theta0 + t * (theta1 - theta0);
    return radius * (theta1 - theta0) * Complex{-std::sin(th), std::cos(th)};
  }
  double distance(Complex p) const {
    if (kind == Kind::kLine) {
      const Complex d = to - from;
      const double len2 = std::norm(d);
      double t = len2 > 0 ? ((p - from) * std::conj(d)).real() / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      return std::abs(p - point(t));
    }
    const double r = std::abs(p - center);
    if (full_circle()) return std::abs(r - radius);
    double best = std::min(std::abs(p - point(0.0)), std::abs(p - point(1.0)));
    const double ang = std::arg(p - center);
    for (int k = -2; k <= 2; ++k) {
      const double a = ang + 2.0 * kPi * k;
      const double lo = std::min(theta0, theta1), hi = std::max(theta0, theta1);
      if (a >= lo && a <= hi) best = std::min(best, std::abs(r - radius));
    }
    return best;
  }
};

/// Oriented piecewise path. Nodes are produced in traversal order.
class ContourPath {
 public:
  ContourPath() = default;
  ContourPath(std::vector<ContourPiece> pieces, bool closed) : pieces_(std::move(pieces)), closed_(closed) {}

  const std::vector<ContourPiece>& pieces() const { return pieces_; }
  bool closed() const { return closed_; }

  NodeSet discretize(int level) const {
    NodeSet ns;
    const auto& gl = gauss_legendre16();
    const int mult = 1 << level;
    for (const auto& pc : pieces_) {
      if (pc.full_circle()) {
        const int n = pc.panels * mult;
        for (int k = 0; k < n; ++k) {
          const double t = static_cast<double>(k) / n;
          ns.z.push_back(pc.point(t));
          ns.w.push_back(pc.derivative(t) / static_cast<double>(n));
        }
        continue;
      }
      const int panels = pc.panels * mult;
      for (int q = 0; q < panels; ++q) {
        const double a = static_cast<double>(q) / panels;
        const double h = 1.0 / panels;
        for (std::size_t g = 0; g < gl.nodes.size(); ++g) {
          const double t = a + 0.5 * h * (gl.nodes[g] + 1.0);
          ns.z.push_back(pc.point(t));
          ns.w.push_back(pc.derivative(t) * (0.5 * h * gl.weights[g]));
        }
      }
    }
    return ns;
  }

  std::size_t node_count(int level) const {
    std::size_t n = 0;
    for (const auto& pc : pieces_) {
      const std::size_t units = static_cast<std::size_t>(pc.panels) << level;
      n += pc.full_circle() ? units : 16 * units;
    }
    return n;
  }

  double distance(Complex p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& pc : pieces_) d = std::min(d, pc.distance(p));
    return d;
  }

  /// Discrete argument principle on the level-2 polygon of nodes.
  int winding_number(Complex p) const {
    if (!closed_) throw InvalidArgument("winding number needs a closed path");
    const NodeSet ns = discretize(2);
    double total = 0.0;
    for (std::size_t k = 0; k < ns.size(); ++k) {
      const Complex a = ns.z[k] - p;
      const Complex b = ns.z[(k + 1) % ns.size()] - p;
      total += std::arg(b / a);
    }
    return static_cast<int>(std::lround(total / (2.0 * kPi)));
  }

  /// Same path traversed backwards.
  ContourPath reversed() const {
    std::vector<ContourPiece> rev(pieces_.rbegin(), pieces_.rend());
    for (auto& pc : rev) {
      std::swap(pc.from, pc.to);
      std::swap(pc.theta0, pc.theta1);
    }
    return ContourPath(std::move(rev), closed_);
  }

  /// Image under z -> scale * z + shift.
  ContourPath transformed(double scale, Complex shift = {}) const {
    std::vector<ContourPiece> out = pieces_;
    for (auto& pc : out) {
      pc.from = scale * pc.from + shift;
      pc.to = scale * pc.to + shift;
      pc.center = scale * pc.center + shift;
      pc.radius *= std::abs(scale);
    }
    return ContourPath(std::move(out), closed_);
  }

 private:
  std::vector<ContourPiece> pieces_;
  bool closed_ = false;
};

inline constexpr double kDefaultNodesPerUnit = 40.0;

inline ContourPiece line_piece(Complex from, Complex to, double nodes_per_unit) {
  ContourPiece pc;
  pc.kind = ContourPiece::Kind::kLine;
  pc.from = from;
  pc.to = to;
  pc.panels = std::max(1, static_cast<int>(std::ceil(std::abs(to - from) * nodes_per_unit / 16.0)));
  return pc;
}

/// Counter-clockwise circle starting at its rightmost point.
inline ContourPath circle_path(Complex center, double radius, double nodes_per_unit = kDefaultNodesPerUnit) {
  if (!(radius > 0.0)) throw InvalidArgument("circle radius must be positive");
  ContourPiece pc;
  pc.kind = ContourPiece::Kind::kArc;
  pc.center = center;
  pc.radius = radius;
  pc.theta0 = 0.0;
  pc.theta1 = 2.0 * kPi;
  pc.panels = std::max(32, static_cast<int>(std::ceil(2.0 * kPi * radius * nodes_per_unit)));
  return ContourPath({pc}, true);
}

/// Counter-clockwise axis-aligned rectangle around the points, every point at
/// least margin from the boundary. Traversal starts at the midpoint of the
/// right edge.
inline ContourPath encircle_points(std::span<const Complex> points, double margin,
                                   double nodes_per_unit = kDefaultNodesPerUnit) {
  if (points.empty()) throw InvalidArgument("encircle_points needs at least one point");
  if (!(margin > 0.0)) throw InvalidArgument("margin must be positive");
  double x0 = points[0].real(), x1 = x0, y0 = points[0].imag(), y1 = y0;
  for (auto p : points) {
    x0 = std::min(x0, p.real());
    x1 = std::max(x1, p.real());
    y0 = std::min(y0, p.imag());
    y1 = std::max(y1, p.imag());
  }
  x0 -= margin;
  x1 += margin;
  y0 -= margin;
  y1 += margin;
  const double ym = 0.5 * (y0 + y1);
  const Complex mid{x1, ym}, tr{x1, y1}, tl{x0, y1}, bl{x0, y0}, br{x1, y0};
  return ContourPath({line_piece(mid, tr, nodes_per_unit), line_piece(tr, tl, nodes_per_unit),
                      line_piece(tl, bl, nodes_per_unit), line_piece(bl, br, nodes_per_unit),
                      line_piece(br, mid, nodes_per_unit)},
                     true);
}

struct IntegrateOptions {
  double tolerance = 1e-9;
  std::size_t max_nodes = std::size_t{1} << 16;
  unsigned threads = 1;
};

namespace detail {

inline double roundoff_floor(double l1) { return 64.0 * std::numeric_limits<double>::epsilon() * l1; }

}  // namespace detail

/// Integral with node doubling. make(const NodeSet&) returns a callable
/// g(k) giving the integrand at node k, so that per-level precomputation
/// (branch tracking, shared products) happens once.
template <typename Make>
Estimate<Complex> integrate_nodes(const ContourPath& path, Make&& make, const IntegrateOptions& opt = {}) {
  Estimate<Complex> out;
  out.converged = false;
  bool have_prev = false;
  Complex prev{};
  for (int level = 0;; ++level) {
    if (path.node_count(level) > opt.max_nodes && have_prev) break;
    const NodeSet ns = path.discretize(level);
    auto g = make(ns);
    std::vector<Complex> terms(ns.size());
    parallel_for(
        ns.size(), [&](std::size_t k) { terms[k] = ns.w[k] * g(k); }, opt.threads);
    Complex sum{};
    double l1 = 0.0;
    for (const auto& t : terms) {
      sum += t;
      l1 += std::abs(t);
    }
    if (!std::isfinite(sum.real()) || !std::isfinite(sum.imag()))
      throw DegenerateArgument("integrand is not finite on the path");
    out.value = sum;
    out.nodes = static_cast<int>(ns.size());
    if (have_prev) {
      const double diff = std::abs(sum - prev);
      out.error = diff + detail::roundoff_floor(l1);
      if (diff <= std::max(opt.tolerance * std::abs(sum), detail::roundoff_floor(l1))) {
        out.converged = true;
        break;
      }
    }
    prev = sum;
    have_prev = true;
  }
  return out;
}

/// Path integral of f along the path.
template <typename F>
Estimate<Complex> integrate(const ContourPath& path, F&& f, const IntegrateOptions& opt = {}) {
  return integrate_nodes(
      path, [&](const NodeSet& ns) { return [&f, &ns](std::size_t k) { return Complex(f(ns.z[k])); }; }, opt);
}

/// Several integrals sharing node evaluations. make(ns) returns a callable
/// g(k, span<Complex> out) filling `count` values at node k.
template <typename Make>
std::vector<Estimate<Complex>> integrate_many(const ContourPath& path, std::size_t count, Make&& make,
                                              const IntegrateOptions& opt = {}) {
  std::vector<Estimate<Complex>> out(count);
  std::vector<Complex> prev(count);
  bool have_prev = false;
  for (int level = 0;; ++level) {
    if (path.node_count(level) > opt.max_nodes && have_prev) break;
    const NodeSet ns = path.discretize(level);
    auto g = make(ns);
    std::vector<Complex> vals(ns.size() * count);
    parallel_for(
        ns.size(), [&](std::size_t k) { g(k, std::span<Complex>(vals.data() + k * count, count)); }, opt.threads);
    bool all = have_prev;
    for (std::size_t c = 0; c < count; ++c) {
      Complex sum{};
      double l1 = 0.0;
      for (std::size_t k = 0; k < ns.size(); ++k) {
        const Complex t = ns.w[k] * vals[k * count + c];
        sum += t;
        l1 += std::abs(t);
      }
      if (!std::isfinite(sum.real()) || !std::isfinite(sum.imag()))
        throw DegenerateArgument("integrand is not finite on the path");
      out[c].value = sum;
      out[c].nodes = static_cast<int>(ns.size());
      if (have_prev) {
        const double diff = std::abs(sum - prev[c]);
        out[c].error = diff + detail::roundoff_floor(l1);
        out[c].converged = diff <= std::max(opt.tolerance * std::abs(sum), detail::roundoff_floor(l1));
        all = all && out[c].converged;
      }
      prev[c] = sum;
    }
    if (all) break;
    have_prev = true;
  }
  return out;
}

/// r-fold integral over a product of paths. make(sets) returns a callable
/// g(span<const std::size_t> idx) for the integrand at the node tuple.
template <typename Make>
Estimate<Complex> integrate_tensor(const std::vector<ContourPath>& paths, Make&& make,
                                   const IntegrateOptions& opt = {}) {
  const std::size_t r = paths.size();
  if (r == 0) throw InvalidArgument("integrate_tensor needs at least one path");
  Estimate<Complex> out;
  out.converged = false;
  bool have_prev = false;
  Complex prev{};
  const std::size_t budget = std::max<std::size_t>(opt.max_nodes, 1) * 64;
  for (int level = 0;; ++level) {
    std::size_t total = 1;
    for (const auto& p : paths) total *= p.node_count(level);
    if (total > budget && have_prev) break;
    std::vector<NodeSet> sets;
    for (const auto& p : paths) sets.push_back(p.discretize(level));
    auto g = make(sets);
    // Parallel over the first index; each slot reduces its own sub-tensor.
    const std::size_t n0 = sets[0].size();
    std::vector<Complex> partial(n0);
    std::vector<double> partial_l1(n0);
    parallel_for(
        n0,
        [&](std::size_t i0) {
          std::vector<std::size_t> idx(r, 0);
          idx[0] = i0;
          Complex acc{};
          double l1 = 0.0;
          while (true) {
            Complex w = 1.0;
            for (std::size_t d = 0; d < r; ++d) w *= sets[d].w[idx[d]];
            const Complex t = w * g(std::span<const std::size_t>(idx));
            acc += t;
            l1 += std::abs(t);
            std::size_t d = r - 1;
            while (d >= 1) {
              if (++idx[d] < sets[d].size()) break;
              idx[d] = 0;
              --d;
            }
            if (d == 0) break;
          }
          partial[i0] = acc;
          partial_l1[i0] = l1;
        },
        opt.threads);
    Complex sum{};
    double l1 = 0.0;
    for (std::size_t i = 0; i < n0; ++i) {
      sum += partial[i];
      l1 += partial_l1[i];
    }
    if (!std::isfinite(sum.real()) || !std::isfinite(sum.imag()))
      throw DegenerateArgument("integrand is not finite on the paths");
    out.value = sum;
    out.nodes = static_cast<int>(total);
    if (have_prev) {
      const double diff = std::abs(sum - prev);
      out.error = diff + detail::roundoff_floor(l1);
      if (diff <= std::max(opt.tolerance * std::abs(sum), detail::roundoff_floor(l1))) {
        out.converged = true;
        break;
      }
    }
    prev = sum;
    have_prev = true;
  }
  return out;
}

/// prod_s (z - b_s)^exponent along the nodes, continued from the principal
/// branch at the first node. Also returns the accumulated argument of each
/// factor, which after a closed loop is 2 pi times the winding number.
struct FractionalPower {
  std::vector<Complex> values;
  std::vector<double> total_argument;
};

inline FractionalPower fractional_power_product(std::span<const Complex> nodes, std::span<const Complex> base_points,
                                                double exponent, bool closed = false) {
  FractionalPower fp;
  const std::size_t n = nodes.size();
  fp.values.resize(n);
  fp.total_argument.assign(base_points.size(), 0.0);
  if (n == 0) return fp;
  std::vector<double> arg(base_points.size());
  std::vector<Complex> last(base_points.size());
  for (std::size_t s = 0; s < base_points.size(); ++s) {
    const Complex d = nodes[0] - base_points[s];
    if (std::abs(d) < 1e-12) throw DegenerateArgument("base point lies on the path");
    arg[s] = std::arg(d);
    last[s] = d;
  }
  auto value_at = [&](std::size_t k) {
    double log_mag = 0.0, phase = 0.0;
    for (std::size_t s = 0; s < base_points.size(); ++s) {
      log_mag += std::log(std::abs(nodes[k] - base_points[s]));
      phase += arg[s];
    }
    return std::exp(exponent * log_mag) * Complex{std::cos(exponent * phase), std::sin(exponent * phase)};
  };
  fp.values[0] = value_at(0);
  auto step = [&](const Complex& z) {
    for (std::size_t s = 0; s < base_points.size(); ++s) {
      const Complex d = z - base_points[s];
      if (std::abs(d) < 1e-12) throw DegenerateArgument("base point lies on the path");
      const double jump = std::arg(d / last[s]);
      if (std::abs(jump) > kPi / 2) throw BranchError("argument jump above pi/2; node density too low");
      arg[s] += jump;
      fp.total_argument[s] += jump;
      last[s] = d;
    }
  };
  for (std::size_t k = 1; k < n; ++k) {
    step(nodes[k]);
    fp.values[k] = value_at(k);
  }
  if (closed) step(nodes[0]);
  return fp;
}

/// Path through a saddle point of the form
///   right edge x_R + i t, |t| <= height, followed by
///   horizontal edges at +-i height out to the truncation abscissa and
///   a closing vertical edge there.
/// Panels on the right edge are graded geometrically away from the real axis
/// starting at `scale`; the other edges are graded away from the right
/// corners.
struct SteepestContour {
  Complex saddle{};
  double right_abscissa = 0.0;
  double height = 0.0;
  double truncation_abscissa = 0.0;
  double scale = 1.0;
  ContourPath path;
};

namespace detail {

/// Breakpoints 0 = s_0 < s_1 < ... = length with s_{k+1} - s_k doubling
/// from h0, never exceeding cap.
inline std::vector<double> graded_breaks(double length, double h0, double cap) {
  std::vector<double> b{0.0};
  double h = std::min(h0, length);
  while (b.back() < length) {
    const double next = std::min(length, b.back() + h);
    if (length - next < 0.25 * h) {
      b.push_back(length);
      break;
    }
    b.push_back(next);
    h = std::min(2.0 * h, cap);
  }
  return b;
}

}  // namespace detail

inline SteepestContour steepest_contour(double saddle, double right_abscissa, double height,
                                        double truncation_abscissa, double scale, int panels_per_piece = 2) {
  if (!(height > 0.0) || !(scale > 0.0)) throw InvalidArgument("invalid steepest contour geometry");
  if (!(truncation_abscissa < right_abscissa)) throw InvalidArgument("truncation must lie left of the right edge");
  SteepestContour sc;
  sc.saddle = saddle;
  sc.right_abscissa = right_abscissa;
  sc.height = height;
  sc.truncation_abscissa = truncation_abscissa;
  sc.scale = scale;
  std::vector<ContourPiece> pieces;
  auto add = [&](Complex a, Complex b) {
    ContourPiece pc;
    pc.from = a;
    pc.to = b;
    pc.panels = panels_per_piece;
    pieces.push_back(pc);
  };
  const double xr = right_abscissa, xl = truncation_abscissa;
  const double width = xr - xl;
  const double cap = std::max(scale, std::min(height, width) / 4.0);
  const auto vb = detail::graded_breaks(height, scale, cap);
  const auto hb = detail::graded_breaks(width, scale, cap);
  // Right edge, upper half: xr -> xr + i height.
  for (std::size_t k = 0; k + 1 < vb.size(); ++k) add({xr, vb[k]}, {xr, vb[k + 1]});
  // Top edge, right to left.
  for (std::size_t k = 0; k + 1 < hb.size(); ++k) add({xr - hb[k], height}, {xr - hb[k + 1], height});
  // Closing edge, top to bottom.
  const auto cb = detail::graded_breaks(2.0 * height, cap, cap);
  for (std::size_t k = 0; k + 1 < cb.size(); ++k) add({xl, height - cb[k]}, {xl, height - cb[k + 1]});
  // Bottom edge, left to right.
  for (std::size_t k = hb.size() - 1; k > 0; --k) add({xr - hb[k], -height}, {xr - hb[k - 1], -height});
  // Right edge, lower half: xr - i height -> xr.
  for (std::size_t k = vb.size() - 1; k > 0; --k) add({xr, -vb[k]}, {xr, -vb[k - 1]});
  sc.path = ContourPath(std::move(pieces), true);
  return sc;
}

}  // namespace spikedet
