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
#include <optional>
#include <random>
#include <vector>

#include "spikedet/core.hpp"
#include "spikedet/mp.hpp"

namespace spikedet {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent generator for replication `stream` of a run seeded by `seed`.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

/// Standard complex normal: real and imaginary parts N(0, 1/2).
inline Complex complex_normal(Rng& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  const double re = g(rng);
  const double im = g(rng);
  return {re, im};
}

inline Eigen::MatrixXcd ginibre(int rows, int cols, Rng& rng) {
  Eigen::MatrixXcd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = complex_normal(rng);
  return m;
}

/// First `cols` columns of a Haar unitary: QR of a Ginibre matrix with the
/// diagonal of R rotated to the positive reals.
inline Eigen::MatrixXcd haar_frame(int rows, int cols, Rng& rng) {
  if (rows < 1 || cols < 1 || cols > rows) throw InvalidArgument("invalid Haar frame dimensions");
  const Eigen::MatrixXcd g = ginibre(rows, cols, rng);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ() * Eigen::MatrixXcd::Identity(rows, cols);
  const auto& r = qr.matrixQR();
  for (int j = 0; j < cols; ++j) {
    const Complex d = r(j, j);
    const double a = std::abs(d);
    if (a > 0.0) q.col(j) *= d / a;
  }
  return q;
}

inline Eigen::MatrixXcd haar_unitary(int p, Rng& rng) { return haar_frame(p, p, rng); }

inline Eigen::MatrixXcd haar_unitary(int p, std::uint64_t seed) {
  Rng rng = stream_rng(seed, 0);
  return haar_unitary(p, rng);
}

/// Spike sizes h, dimensions and noise level. V defaults to a Haar frame.
struct SpikeParams {
  std::vector<double> h;
  int n = 1;
  int p = 1;
  double sigma2 = 1.0;
  std::optional<Eigen::MatrixXcd> V;

  int r() const { return static_cast<int>(h.size()); }

  void validate() const {
    if (n < 1 || p < 1) throw InvalidArgument("dimensions must be positive");
    if (r() > p) throw InvalidArgument("more spikes than dimensions");
    if (!(sigma2 > 0.0)) throw InvalidArgument("sigma2 must be positive");
    for (double x : h)
      if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("spike sizes must be finite and non-negative");
    if (V) {
      if (V->rows() != p || V->cols() != r()) throw InvalidArgument("V must be p x r");
      const Eigen::MatrixXcd gram = V->adjoint() * *V;
      if (!gram.isApprox(Eigen::MatrixXcd::Identity(r(), r()), 1e-10))
        throw InvalidArgument("V must have orthonormal columns");
    }
  }
};

/// Draws X with covariance sigma2 (I + V H V*) and returns the ordered
/// eigenvalues of XX*/n (through X*X/n when p > n).
inline EigenSample sample_spiked_eigs(const SpikeParams& params, Rng& rng) {
  params.validate();
  const int n = params.n, p = params.p;
  Eigen::MatrixXcd x = ginibre(p, n, rng);
  bool spiked = false;
  for (double v : params.h) spiked = spiked || v > 0.0;
  if (spiked) {
    const Eigen::MatrixXcd v = params.V ? *params.V : haar_frame(p, params.r(), rng);
    Eigen::VectorXd d(params.r());
    for (int i = 0; i < params.r(); ++i) d(i) = std::sqrt(1.0 + params.h[i]) - 1.0;
    const Eigen::MatrixXcd proj = d.asDiagonal() * (v.adjoint() * x);
    x.noalias() += v * proj;
  }
  if (params.sigma2 != 1.0) x *= std::sqrt(params.sigma2);
  const int m = std::min(n, p);
  Eigen::MatrixXcd gram = Eigen::MatrixXcd::Zero(m, m);
  if (p <= n)
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x, 1.0 / n);
  else
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x.adjoint(), 1.0 / n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(gram, Eigen::EigenvaluesOnly);
  std::vector<double> lam(m);
  for (int i = 0; i < m; ++i) lam[i] = std::max(0.0, es.eigenvalues()(i));
  return EigenSample(std::move(lam), n, p);
}

inline EigenSample sample_spiked_eigs(const SpikeParams& params, std::uint64_t seed, std::uint64_t stream = 0) {
  Rng rng = stream_rng(seed, stream);
  return sample_spiked_eigs(params, rng);
}

/// mu_j = lambda_j / S for j = 1..m-1.
inline std::vector<double> normalized_eigs(const EigenSample& sample) {
  if (!(sample.S > 0.0)) throw InvalidArgument("eigenvalue sum must be positive");
  std::vector<double> mu;
  for (int j = 0; j + 1 < sample.m(); ++j) mu.push_back(sample.lambda[j] / sample.S);
  return mu;
}

}  // namespace spikedet
