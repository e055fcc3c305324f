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
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spikedet {

using Complex = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};
inline constexpr Complex kTwoPiI{0.0, 2.0 * std::numbers::pi};

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad dimensions, out-of-range
/// parameters, malformed input).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Argument lies on or too close to a singular set (repeated Vandermonde
/// entries, a point on the integration path, z on the spectral support).
class DegenerateArgument : public Error {
 public:
  using Error::Error;
};

/// Quadrature or series failed to meet its tolerance within budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Continuous branch tracking lost track of the argument.
class BranchError : public Error {
 public:
  using Error::Error;
};

/// Value together with an absolute error estimate.
template <typename T>
struct Estimate {
  T value{};
  double error = 0.0;
  bool converged = true;
  int nodes = 0;
};

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t draws = 0;
};

// ---------------------------------------------------------------------------
// Small numeric helpers

inline double log_factorial(int k) { return std::lgamma(static_cast<double>(k) + 1.0); }

inline double factorial(int k) {
  double f = 1.0;
  for (int i = 2; i <= k; ++i) f *= i;
  return f;
}

/// log of a complex number that is tracked as (log-magnitude, phase).
struct LogValue {
  double log_abs = -std::numeric_limits<double>::infinity();
  Complex phase{1.0, 0.0};  // unit modulus, or 0 for an exact zero

  Complex to_complex() const { return phase * std::exp(log_abs); }
};

inline LogValue log_value(Complex z) {
  const double a = std::abs(z);
  if (a == 0.0) return {-std::numeric_limits<double>::infinity(), Complex{0.0, 0.0}};
  return {std::log(a), z / a};
}

/// Determinant of a small complex matrix (row-major, n x n) by partial
/// pivoting. Used where Eigen's dynamic-size overhead would dominate.
inline Complex small_determinant(std::vector<Complex> m, int n) {
  Complex det{1.0, 0.0};
  for (int col = 0; col < n; ++col) {
    int piv = col;
    double best = std::abs(m[col * n + col]);
    for (int row = col + 1; row < n; ++row) {
      const double v = std::abs(m[row * n + col]);
      if (v > best) {
        best = v;
        piv = row;
      }
    }
    if (best == 0.0) return Complex{0.0, 0.0};
    if (piv != col) {
      for (int k = 0; k < n; ++k) std::swap(m[col * n + k], m[piv * n + k]);
      det = -det;
    }
    const Complex d = m[col * n + col];
    det *= d;
    for (int row = col + 1; row < n; ++row) {
      const Complex f = m[row * n + col] / d;
      if (f == Complex{}) continue;
      for (int k = col; k < n; ++k) m[row * n + k] -= f * m[col * n + k];
    }
  }
  return det;
}

/// Row-scaled log-determinant: rows are divided by their max modulus first,
/// so entries spanning hundreds of orders of magnitude stay representable.
inline LogValue log_determinant(std::vector<Complex> m, int n) {
  double shift = 0.0;
  for (int i = 0; i < n; ++i) {
    double mx = 0.0;
    for (int j = 0; j < n; ++j) mx = std::max(mx, std::abs(m[i * n + j]));
    if (mx == 0.0) return {-std::numeric_limits<double>::infinity(), Complex{}};
    for (int j = 0; j < n; ++j) m[i * n + j] /= mx;
    shift += std::log(mx);
  }
  LogValue lv = log_value(small_determinant(std::move(m), n));
  lv.log_abs += shift;
  return lv;
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes on [-1, 1]

struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline GaussLegendre gauss_legendre(int n) {
  GaussLegendre gl;
  gl.nodes.resize(n);
  gl.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = pk;
    }
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    gl.nodes[i] = -x;
    gl.nodes[n - 1 - i] = x;
    gl.weights[i] = w;
    gl.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) gl.nodes[n / 2] = 0.0;
  return gl;
}

/// Rules are cached per order; references stay valid for the program's life.
inline const GaussLegendre& gauss_legendre_cached(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussLegendre>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussLegendre>(gauss_legendre(n));
  return *slot;
}

/// The panel rule used throughout.
inline const GaussLegendre& gauss_legendre16() {
  static const GaussLegendre& rule = gauss_legendre_cached(16);
  return rule;
}

// ---------------------------------------------------------------------------
// Threads and deterministic parallel loops

/// Thread count from SPIKEDET_THREADS, else hardware concurrency.
inline unsigned default_thread_count() {
  if (const char* env = std::getenv("SPIKEDET_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs body(i) for i in [0, count). Each index is handled exactly once and
/// results must be written to per-index slots, so the outcome does not depend
/// on the number of threads.
template <typename Body>
void parallel_for(std::size_t count, Body&& body, unsigned threads = default_thread_count()) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < count; i += threads) body(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace spikedet
