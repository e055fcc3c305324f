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

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spikedet/spikedet.hpp"

namespace spikedet::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInput = 3;
inline constexpr const char* kSchema = "v1";

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parsing helpers

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Comma-separated list of reals, e.g. "0.5,0.5".
inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw InputError("not a number list: '" + s + "'");
    }
  }
  if (out.empty()) throw InputError("empty number list");
  return out;
}

/// Counts may be written as 1e6.
inline std::size_t to_count(double v, const char* what) {
  if (!(v >= 1.0) || v != std::floor(v) || v > 1e15) throw InputError(std::string(what) + " must be a positive integer");
  return static_cast<std::size_t>(v);
}

/// One non-negative eigenvalue per line; blank lines are ignored.
inline std::vector<double> read_eigenvalues(std::istream& in) {
  std::vector<double> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string field = line.substr(first, last - first + 1);
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw InputError("line " + std::to_string(number) + ": not a number: '" + field + "'");
    }
    if (!std::isfinite(v)) throw InputError("line " + std::to_string(number) + ": eigenvalue is not finite");
    if (v < 0.0) throw InputError("line " + std::to_string(number) + ": negative eigenvalue " + field);
    out.push_back(v);
  }
  return out;
}

inline std::vector<double> read_eigenvalue_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open eigenvalue file '" + path + "'");
  return read_eigenvalues(in);
}

struct Dimensions {
  std::optional<int> n, p;
  std::optional<double> c;

  double aspect() const {
    if (n && p) {
      if (*n < 1 || *p < 1) throw InputError("n and p must be positive");
      const double cp = static_cast<double>(*p) / *n;
      if (c && std::abs(*c - cp) > 1e-12 * cp) throw InputError("c does not equal p / n");
      return cp;
    }
    if (n || p) throw InputError("give both n and p, or c alone");
    if (!c) throw InputError("an aspect ratio is required (--c, or --n with --p)");
    if (!(*c > 0.0)) throw InputError("c must be positive");
    return *c;
  }
};

inline void add_dimensions(CLI::App* app, Dimensions& d) {
  app->add_option("--n", d.n, "Number of observations");
  app->add_option("--p", d.p, "Dimension");
  app->add_option("--c", d.c, "Aspect ratio p/n");
}

struct OutputSpec {
  std::string path;
  std::string format = "csv";
};

/// Writes to the output file if one was given, else to `out`.
template <typename Writer>
void emit(const OutputSpec& spec, std::ostream& out, Writer&& write) {
  if (spec.path.empty() || spec.path == "-") {
    write(out);
    return;
  }
  std::ofstream f(spec.path);
  if (!f) throw InputError("cannot write '" + spec.path + "'");
  write(f);
}

inline LRVariant parse_variant(const std::string& s) {
  if (s == "lambda") return LRVariant::kLambda;
  if (s == "mu") return LRVariant::kMu;
  throw InputError("variant must be lambda or mu");
}

inline json vector_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(x);
  return a;
}

// ---------------------------------------------------------------------------
// envelope

struct EnvelopeConfig {
  Dimensions dims;
  int r = 0;
  std::vector<double> h;
  double size = 0.05;
  int grid_points = 0;
  double h_max = 0.0;
  OutputSpec output;
};

struct EnvelopeRow {
  std::vector<double> h;
  EnvelopePoint lambda, mu;
};

inline std::vector<EnvelopeRow> envelope_table(const EnvelopeConfig& cfg) {
  const double c = cfg.dims.aspect();
  std::vector<std::vector<double>> pts;
  if (cfg.grid_points > 0) {
    const int r = cfg.r > 0 ? cfg.r : 1;
    if (r > 3) throw InputError("envelope grids support r <= 3");
    if (cfg.grid_points < 2) throw InputError("grid needs at least two points");
    if (!(cfg.h_max > 0.0 && cfg.h_max < std::sqrt(c))) throw InputError("--h-max must lie in (0, sqrt(c))");
    std::vector<int> idx(r, 0);
    while (true) {
      std::vector<double> pt(r);
      for (int i = 0; i < r; ++i) pt[i] = cfg.h_max * idx[i] / (cfg.grid_points - 1);
      pts.push_back(pt);
      int k = r - 1;
      while (k >= 0 && idx[k] == cfg.grid_points - 1) idx[k--] = 0;
      if (k < 0) break;
      ++idx[k];
    }
  } else {
    if (cfg.h.empty()) throw InputError("give --h or a grid (--grid-points with --h-max)");
    const int r = cfg.r > 0 ? cfg.r : static_cast<int>(cfg.h.size());
    if (cfg.h.size() == 1)
      pts.emplace_back(r, cfg.h[0]);
    else if (static_cast<int>(cfg.h.size()) == r)
      pts.push_back(cfg.h);
    else
      throw InputError("--h must hold one value or r values");
  }
  std::vector<EnvelopeRow> rows;
  for (const auto& pt : pts) {
    for (double v : pt)
      if (!(v >= 0.0 && v < std::sqrt(c))) throw InputError("spike sizes must lie in [0, sqrt(c))");
    rows.push_back({pt, envelope(pt, c, cfg.size, LRVariant::kLambda), envelope(pt, c, cfg.size, LRVariant::kMu)});
  }
  return rows;
}

inline void write_envelope(const EnvelopeConfig& cfg, const std::vector<EnvelopeRow>& rows, std::ostream& os) {
  const std::size_t r = rows.front().h.size();
  if (cfg.output.format == "json") {
    json j{{"schema", kSchema}, {"command", "envelope"}, {"c", rows.front().lambda.c}, {"size", cfg.size}};
    json arr = json::array();
    for (const auto& row : rows)
      arr.push_back({{"h", vector_json(row.h)},
                     {"W_lambda", row.lambda.W},
                     {"beta_lambda", row.lambda.beta},
                     {"W_mu", row.mu.W},
                     {"beta_mu", row.mu.beta}});
    j["rows"] = arr;
    os << j.dump(2) << "\n";
    return;
  }
  for (std::size_t i = 0; i < r; ++i) os << "h" << i + 1 << ",";
  os << "W_lambda,beta_lambda,W_mu,beta_mu\n";
  for (const auto& row : rows) {
    for (double v : row.h) os << format_double(v) << ",";
    os << format_double(row.lambda.W) << "," << format_double(row.lambda.beta) << "," << format_double(row.mu.W)
       << "," << format_double(row.mu.beta) << "\n";
  }
}

// ---------------------------------------------------------------------------
// detect

struct DetectConfig {
  std::string eigenvalues;
  int n = 0, p = 0;
  std::string h;
  int r = 0;
  std::string variant = "lambda";
  std::string method = "auto";
  int grid_points = 25;
  std::optional<double> h_max;
  double field_draws = 1e5;
  double size = 0.05;
  std::optional<std::uint64_t> seed;
  OutputSpec output;
};

inline const char* formula_id(LRMethod m, LRVariant v) {
  if (m == LRMethod::kLaplace) return v == LRVariant::kLambda ? "lambda-laplace-saddle" : "mu-laplace-saddle";
  return v == LRVariant::kLambda ? "lambda-contour-determinant" : "mu-contour-permutation-sum";
}

inline json lr_json(const LRResult& res, LRVariant v, const std::string& note) {
  json j{{"h", vector_json(res.h)},
         {"variant", to_string(v)},
         {"value", res.log_lr},
         {"method", to_string(res.method)},
         {"formula", formula_id(res.method, v)},
         {"error_estimate", res.error_estimate},
         {"converged", res.converged},
         {"jittered", res.jittered},
         {"phase_error", res.phase_error}};
  if (!note.empty()) j["note"] = note;
  return j;
}

/// Log L at h: the exact contour form when the dimension and spike count
/// permit it, else the Laplace form.
inline std::pair<LRResult, std::string> evaluate_lr(const std::vector<double>& h, const EigenSample& s,
                                                    const MPLaw& law, LRVariant v, const std::string& method) {
  const int r = static_cast<int>(h.size());
  const bool exact_ok = s.p <= kMaxExactDimension && r <= (v == LRVariant::kLambda ? 3 : 2);
  if (method == "exact" && !exact_ok) throw InputError("exact evaluation is limited to p <= 2000 and r <= 3 (lambda) or 2 (mu)");
  if (method == "laplace" || !exact_ok) {
    std::string note = method == "auto" ? "exact form out of range; Laplace form used" : "";
    return {v == LRVariant::kLambda ? lr_lambda_laplace(h, s, law) : lr_mu_laplace(h, s, law), note};
  }
  ExactOptions opt;
  opt.jitter = true;
  try {
    return {v == LRVariant::kLambda ? lr_lambda_exact(h, s, law, opt) : lr_mu_exact(h, s, law, opt), ""};
  } catch (const ConvergenceError& e) {
    if (method == "exact") throw;
    return {v == LRVariant::kLambda ? lr_lambda_laplace(h, s, law) : lr_mu_laplace(h, s, law),
            std::string("exact form failed (") + e.what() + "); Laplace form used"};
  }
}

inline json detect_report(const DetectConfig& cfg, const std::vector<double>& values) {
  if (cfg.n < 1 || cfg.p < 1) throw InputError("--n and --p must be positive");
  if (!cfg.seed) throw InputError("--seed is required");
  if (static_cast<int>(values.size()) != std::min(cfg.n, cfg.p))
    throw InputError("eigenvalue count " + std::to_string(values.size()) + " does not equal min(n, p) = " +
                     std::to_string(std::min(cfg.n, cfg.p)));
  if (cfg.method != "auto" && cfg.method != "exact" && cfg.method != "laplace")
    throw InputError("--method must be auto, exact or laplace");
  const LRVariant v = parse_variant(cfg.variant);
  const EigenSample s(values, cfg.n, cfg.p);
  const MPLaw law = MPLaw::from_dimensions(cfg.n, cfg.p);
  const double c = law.c;
  std::vector<double> h;
  if (!cfg.h.empty()) {
    h = parse_list(cfg.h);
    for (double x : h)
      if (!(x > 0.0 && x < std::sqrt(c))) throw InputError("spike sizes must lie in (0, sqrt(p/n))");
  }
  const int r = cfg.r > 0 ? cfg.r : std::max<int>(1, static_cast<int>(h.size()));
  if (r > 3) throw InputError("sup-LR grids support r <= 3");
  const double h_bar = cfg.h_max.value_or(default_h_bar(c));
  if (!(h_bar > 0.0 && h_bar < std::sqrt(c))) throw InputError("--h-max must lie in (0, sqrt(p/n))");
  if (cfg.grid_points < 2) throw InputError("--grid-points must be at least 2");
  if (!(cfg.size > 0.0 && cfg.size < 1.0)) throw InputError("--size must lie in (0, 1)");
  const std::size_t draws = to_count(cfg.field_draws, "--field-draws");

  json rep{{"schema", kSchema}, {"command", "detect"}};
  rep["data"] = {{"n", cfg.n}, {"p", cfg.p}, {"c_p", c}, {"m", s.m()}, {"lambda_1", s.lambda.front()}, {"trace", s.S}};
  if (!h.empty()) {
    const auto [res, note] = evaluate_lr(h, s, law, v, cfg.method);
    rep["log_lr"] = lr_json(res, v, note);
  }
  const FieldGrid grid = make_field_grid(r, c, h_bar, cfg.grid_points, v);
  const FieldDistribution fd = simulate_limit_field(grid, draws, *cfg.seed);
  const SupLRTest test(grid, fd.critical_value(cfg.size));
  const double stat = test.statistic(s);
  const double pval = fd.p_value(stat);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Rng tie_rng = stream_rng(*cfg.seed, std::numeric_limits<std::uint64_t>::max());
  const double rpval = fd.randomized_p_value(stat, unit(tie_rng));
  rep["sup_lr"] = {{"variant", to_string(v)},
                   {"statistic", stat},
                   {"formula", "laplace-sup-over-grid"},
                   {"grid", {{"r", r}, {"h_max", h_bar}, {"points_per_axis", cfg.grid_points}, {"size", grid.size()}}},
                   {"null_law", {{"formula", "gaussian-limit-field"}, {"draws", draws}, {"seed", *cfg.seed}}},
                   {"size", cfg.size},
                   {"critical_value", test.critical_value()},
                   {"p_value", rpval},
                   {"p_value_conservative", pval},
                   {"p_value_std_error", std::sqrt(pval * (1.0 - pval) / static_cast<double>(draws))},
                   {"reject", stat > test.critical_value()}};
  return rep;
}

// ---------------------------------------------------------------------------
// simulate-power

struct PowerConfig {
  int n = 0, p = 0;
  std::vector<std::string> alternatives;
  std::string test = "lr-lambda";
  std::string target;
  std::string point_variant = "lambda";
  double reps = 1000;
  std::optional<std::uint64_t> seed;
  double size = 0.05;
  std::optional<double> h_max;
  int grid_points = 25;
  double field_draws = 1e5;
  OutputSpec output;
};

inline TestKind parse_test(const std::string& s) {
  if (s == "lr-lambda") return TestKind::kLRLambda;
  if (s == "lr-mu") return TestKind::kLRMu;
  if (s == "point-optimal") return TestKind::kPointOptimal;
  throw InputError("--test must be lr-lambda, lr-mu or point-optimal");
}

inline std::vector<PowerRow> power_table(const PowerConfig& cfg) {
  if (cfg.n < 1 || cfg.p < 1) throw InputError("--n and --p must be positive");
  if (!cfg.seed) throw InputError("--seed is required");
  if (cfg.alternatives.empty()) throw InputError("give at least one --alt spike vector");
  const double c = static_cast<double>(cfg.p) / cfg.n;
  std::vector<std::vector<double>> alts;
  for (const auto& a : cfg.alternatives) {
    alts.push_back(parse_list(a));
    for (double x : alts.back())
      if (!(x >= 0.0 && x < std::sqrt(c))) throw InputError("spike sizes must lie in [0, sqrt(p/n))");
    if (alts.back().size() != alts.front().size()) throw InputError("alternatives must share one spike count");
  }
  PowerOptions opt;
  opt.alpha_size = cfg.size;
  opt.h_bar = cfg.h_max;
  opt.points_per_axis = cfg.grid_points;
  opt.field_draws = to_count(cfg.field_draws, "--field-draws");
  if (!cfg.target.empty()) opt.target = parse_list(cfg.target);
  opt.point_variant = parse_variant(cfg.point_variant);
  const TestKind kind = parse_test(cfg.test);
  if (kind == TestKind::kPointOptimal) {
    const auto& t = opt.target.empty() ? alts.front() : opt.target;
    for (double x : t)
      if (!(x > 0.0)) throw InputError("point-optimal tests need a positive --target (or positive alternatives)");
    if (opt.target.empty())
      for (const auto& a : alts)
        for (double x : a)
          if (!(x > 0.0)) throw InputError("an alternative with a zero spike needs --target");
  }
  if (opt.h_bar && !(*opt.h_bar > 0.0 && *opt.h_bar < std::sqrt(c))) throw InputError("--h-max must lie in (0, sqrt(p/n))");
  return power_curve(alts, c, cfg.n, cfg.p, kind, to_count(cfg.reps, "--reps"), *cfg.seed, opt);
}

inline void write_power(const PowerConfig& cfg, const std::vector<PowerRow>& rows, std::ostream& os) {
  if (cfg.output.format == "json") {
    json j{{"schema", kSchema}, {"command", "simulate-power"}, {"test", cfg.test}, {"n", cfg.n}, {"p", cfg.p},
           {"size", cfg.size}, {"seed", *cfg.seed}, {"statistic", "laplace"}};
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"h", vector_json(r.h)},
                     {"replications", r.replications},
                     {"rejections", r.rejections},
                     {"rate", r.rate},
                     {"std_error", r.std_error},
                     {"envelope", r.envelope},
                     {"critical_value", r.critical_value}});
    j["rows"] = arr;
    os << j.dump(2) << "\n";
    return;
  }
  const std::size_t r = rows.front().h.size();
  for (std::size_t i = 0; i < r; ++i) os << "h" << i + 1 << ",";
  os << "replications,rejections,rate,std_error,envelope,critical_value\n";
  for (const auto& row : rows) {
    for (double v : row.h) os << format_double(v) << ",";
    os << row.replications << "," << row.rejections << "," << format_double(row.rate) << ","
       << format_double(row.std_error) << "," << format_double(row.envelope) << ","
       << format_double(row.critical_value) << "\n";
  }
}

// ---------------------------------------------------------------------------
// validate

struct Check {
  std::string name;
  double value = 0.0;
  double reference = 0.0;
  double discrepancy = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct SuiteResult {
  std::string name;
  std::vector<Check> checks;

  bool passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return !checks.empty();
  }

  void add(std::string check, double value, double reference, double discrepancy, double tolerance) {
    checks.push_back({std::move(check), value, reference, discrepancy, tolerance,
                      std::isfinite(discrepancy) && discrepancy <= tolerance});
  }
};

inline double rel_diff(Complex x, Complex y) { return std::abs(x - y) / std::abs(y); }

/// Four routes to the unitary HCIZ integral (series, confluent determinant,
/// contour reduction, single-integral determinant) on random instances with
/// arguments in [0, 1], plus Haar Monte Carlo.
inline SuiteResult hciz_suite(int p, std::size_t draws, std::uint64_t seed, int instances = 1, double rel_tol = 1e-6,
                              int rank = 0) {
  if (p < 1 || p > 4) throw InputError("hciz suite supports 1 <= p <= 4");
  if (rank < 0 || rank > std::min(2, p)) throw InputError("hciz suite supports rank <= min(2, p)");
  SuiteResult out{"hciz", {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < instances; ++k) {
    const int r = rank > 0 ? rank : std::min(2, p);
    Spectrum block(r), b(p);
    for (auto& x : block) x = u(rng);
    for (auto& x : b) x = u(rng);
    const RankDeficientArg A(block, p);
    const auto series = f00_series(1.0, A.full(), b, 30);
    Complex cen{};
    for (auto x : b) cen += x;
    cen /= static_cast<double>(p);
    double rad = 0.0;
    for (auto x : b) rad = std::max(rad, std::abs(x - cen));
    const ContourPath K = circle_path(cen, rad + 1.0);
    const Complex det = hciz_rank_deficient(A, b);
    const auto lemma = f00_rank_deficient(AlphaParam::from_beta(2), A, b, K);
    const auto cor = corollary1_determinant(A, b, K);
    const std::string tag = "p=" + std::to_string(p) + " r=" + std::to_string(r) + " #" + std::to_string(k);
    const double s = series.value.real();
    out.add("determinantal vs series " + tag, det.real(), s, rel_diff(det, series.value), rel_tol);
    out.add("contour vs series " + tag, lemma.value.real(), s, rel_diff(lemma.value, series.value), rel_tol);
    out.add("single-integral determinant vs series " + tag, cor.value.real(), s, rel_diff(cor.value, series.value),
            rel_tol);
    out.add("contour vs determinantal " + tag, lemma.value.real(), det.real(), rel_diff(lemma.value, det), rel_tol);
    out.add("single-integral determinant vs contour " + tag, cor.value.real(), lemma.value.real(),
            rel_diff(cor.value, lemma.value), rel_tol);
    std::vector<double> ar(p, 0.0), br(p);
    for (int i = 0; i < r; ++i) ar[i] = block[i].real();
    for (int i = 0; i < p; ++i) br[i] = b[i].real();
    // For p = 1 the average is deterministic and the standard error vanishes.
    const auto mc = hciz_monte_carlo(ar, br, static_cast<std::int64_t>(draws), seed + 1000 + k);
    out.add("Haar Monte Carlo vs determinantal (SE units) " + tag, mc.mean, det.real(),
            std::abs(mc.mean - det.real()) / std::max(mc.std_error, 1e-12 * std::abs(det.real())), 3.0);
  }
  return out;
}

/// Partition sums against powers of the trace, and torus orthogonality of
/// Jack polynomials against the closed-form norms.
inline SuiteResult jack_suite(std::uint64_t seed, int max_degree = 6, int max_orth_degree = 3) {
  SuiteResult out{"jack", {}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  for (double alpha : {0.5, 1.0, 2.0}) {
    double worst = 0.0;
    for (int p = 1; p <= 4; ++p) {
      Spectrum x(p);
      for (auto& v : x) v = Complex{g(rng), g(rng)};
      Complex trace{};
      for (auto v : x) trace += v;
      auto basis = jack_basis(alpha, max_degree, p);
      const auto cx = basis->evaluate(x);
      for (int k = 0; k <= max_degree; ++k) {
        Complex sum{};
        for (int i = basis->degree_begin(k); i < basis->degree_begin(k + 1); ++i) sum += cx[i];
        const Complex expect = std::pow(trace, k);
        worst = std::max(worst, std::abs(sum - expect) / std::max(1.0, std::abs(expect)));
      }
    }
    out.add("partition sums equal trace powers, alpha=" + format_double(alpha), worst, 0.0, worst, 1e-10);
    double diag = 0.0, off = 0.0;
    for (int r = 1; r <= 3; ++r) {
      std::vector<Partition> ps;
      for (int k = 0; k <= max_orth_degree; ++k)
        for (auto& q : enumerate_partitions(k, r)) ps.push_back(q);
      for (std::size_t i = 0; i < ps.size(); ++i) {
        for (std::size_t j = i; j < ps.size(); ++j) {
          if (ps[i].weight() != ps[j].weight()) continue;
          const auto v = torus_inner_product(ps[i], ps[j], alpha, r, 8, 1e-9);
          if (i == j) {
            const double expect = torus_norm_closed_form(ps[i], alpha, r);
            diag = std::max(diag, std::abs(v.value - expect) / expect);
          } else {
            off = std::max(off, std::abs(v.value));
          }
        }
      }
    }
    out.add("torus norms match closed form, alpha=" + format_double(alpha), diag, 0.0, diag, 1e-6);
    out.add("torus off-diagonal products vanish, alpha=" + format_double(alpha), off, 0.0, off, 1e-6);
  }
  return out;
}

/// Per-replication statistics of a null batch at n = p.
struct NullBatch {
  int n = 0;
  double h = 0.4;
  std::vector<double> s_centered, t_centered, delta, log_l_lambda, log_l_mu;
};

inline std::vector<EigenSample> null_samples(int n, std::size_t reps, std::uint64_t seed) {
  std::vector<EigenSample> out(reps);
  parallel_for(reps, [&](std::size_t i) {
    SpikeParams sp;
    sp.n = n;
    sp.p = n;
    out[i] = sample_spiked_eigs(sp, seed, i);
  });
  return out;
}

inline NullBatch null_batch(const std::vector<EigenSample>& samples, double h = 0.4) {
  if (samples.size() < 2) throw InputError("a null batch needs at least two replications");
  const std::size_t reps = samples.size();
  NullBatch b;
  b.n = samples.front().n;
  b.h = h;
  b.s_centered.resize(reps);
  b.t_centered.resize(reps);
  b.delta.resize(reps);
  b.log_l_lambda.resize(reps);
  b.log_l_mu.resize(reps);
  const MPLaw law(1.0);
  const LaplaceEvaluator ev(law);
  const double z0 = saddle(h, 1.0).z0;
  const std::vector<double> hv{h};
  parallel_for(reps, [&](std::size_t i) {
    const EigenSample& s = samples[i];
    if (s.n != s.p) throw InputError("null batches use n = p");
    b.s_centered[i] = s.S - s.n;
    b.t_centered[i] = s.T - 2.0 * s.n;
    b.delta[i] = delta_p(s, law, z0).real();
    b.log_l_lambda[i] = ev.evaluate(hv, s, LRVariant::kLambda).log_lr;
    b.log_l_mu[i] = ev.evaluate(hv, s, LRVariant::kMu).log_lr;
  });
  return b;
}

inline NullBatch null_batch(int n, std::size_t reps, std::uint64_t seed, double h = 0.4) {
  return null_batch(null_samples(n, reps, seed), h);
}

struct Moments {
  double mean = 0.0, var = 0.0, mean_se = 0.0, var_se = 0.0;
};

inline Moments moments(const std::vector<double>& x) {
  Moments m;
  const double k = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= k;
  double m4 = 0.0;
  for (double v : x) {
    const double d = (v - m.mean) * (v - m.mean);
    m.var += d;
    m4 += d * d;
  }
  m.var /= k - 1.0;
  m4 /= k;
  m.mean_se = std::sqrt(m.var / k);
  m.var_se = std::sqrt(std::max(0.0, m4 - m.var * m.var) / k);
  return m;
}

/// Sample covariance with the standard error of the mean product.
inline std::pair<double, double> covariance(const std::vector<double>& x, const std::vector<double>& y) {
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  std::vector<double> prod(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) prod[i] = (x[i] - mx) * (y[i] - my);
  const Moments m = moments(prod);
  return {m.mean * k / (k - 1.0), m.mean_se};
}

/// Variance tolerances widen to three standard errors of the sample
/// variance when the batch is too small for the nominal value.
///
/// Spectral statistic moments: Var(S - p) = c, Var(T - (1 + c)p) =
/// 2c(2 + 5c + 2c^2), Cov(S - p, Delta_p(z0(h))) = -h, at c = 1.
inline SuiteResult spectral_moments_suite(const NullBatch& b, double rel_tol = 0.10) {
  SuiteResult out{"spectral-moments", {}};
  const Moments s = moments(b.s_centered), t = moments(b.t_centered);
  out.add("Var(S - p) relative to c", s.var, 1.0, std::abs(s.var - 1.0), std::max(rel_tol, 3.0 * s.var_se / s.var));
  out.add("Var(T - (1 + c)p) relative to 2c(2 + 5c + 2c^2)", t.var, 18.0, std::abs(t.var / 18.0 - 1.0),
          std::max(rel_tol, 3.0 * t.var_se / t.var));
  const auto [cov, se] = covariance(b.s_centered, b.delta);
  out.add("Cov(S - p, Delta_p(z0)) vs -h (SE units)", cov, -b.h, std::abs(cov + b.h) / se, 3.0);
  return out;
}

/// Null mean and variance of the Laplace log L against the Gaussian limit.
inline SuiteResult null_moments_suite(const NullBatch& b, double var_tol = 0.15) {
  SuiteResult out{"null-moments", {}};
  const std::vector<double> h{b.h};
  for (LRVariant v : {LRVariant::kLambda, LRVariant::kMu}) {
    const auto& x = v == LRVariant::kLambda ? b.log_l_lambda : b.log_l_mu;
    const Moments m = moments(x);
    const LimitMoments lim = limit_process_moments(h, h, 1.0, v);
    const std::string tag = std::string(" (") + to_string(v) + ")";
    out.add("mean of log L vs limit (SE units)" + tag, m.mean, lim.mean, std::abs(m.mean - lim.mean) / m.mean_se, 3.0);
    out.add("variance of log L relative to limit" + tag, m.var, lim.cov, std::abs(m.var / lim.cov - 1.0),
            std::max(var_tol, 3.0 * m.var_se / m.var));
  }
  return out;
}

inline json suite_json(const SuiteResult& s) {
  json checks = json::array();
  for (const auto& c : s.checks)
    checks.push_back({{"name", c.name},
                      {"value", c.value},
                      {"reference", c.reference},
                      {"discrepancy", c.discrepancy},
                      {"tolerance", c.tolerance},
                      {"passed", c.passed}});
  return {{"suite", s.name}, {"passed", s.passed()}, {"checks", checks}};
}

struct ValidateConfig {
  std::string suite = "all";
  int p = 3;
  double draws = 2e5;
  int n = 200;
  double reps = 500;
  std::uint64_t seed = 20260101;
  OutputSpec output;
};

inline json validate_report(const ValidateConfig& cfg, bool& passed) {
  const std::vector<std::string> known{"all", "hciz", "jack", "spectral-moments", "null-moments"};
  if (std::find(known.begin(), known.end(), cfg.suite) == known.end())
    throw InputError("unknown suite '" + cfg.suite + "' (all, hciz, jack, spectral-moments, null-moments)");
  const bool all = cfg.suite == "all";
  std::vector<SuiteResult> results;
  if (all || cfg.suite == "hciz") results.push_back(hciz_suite(cfg.p, to_count(cfg.draws, "--draws"), cfg.seed));
  if (all || cfg.suite == "jack") results.push_back(jack_suite(cfg.seed));
  if (all || cfg.suite == "spectral-moments" || cfg.suite == "null-moments") {
    if (cfg.n < 2) throw InputError("--n must be at least 2");
    const NullBatch b = null_batch(cfg.n, to_count(cfg.reps, "--reps"), cfg.seed);
    if (all || cfg.suite == "spectral-moments") results.push_back(spectral_moments_suite(b));
    if (all || cfg.suite == "null-moments") results.push_back(null_moments_suite(b));
  }
  passed = true;
  json suites = json::array();
  for (const auto& r : results) {
    passed = passed && r.passed();
    suites.push_back(suite_json(r));
  }
  return {{"schema", kSchema},
          {"command", "validate"},
          {"config", {{"suite", cfg.suite}, {"p", cfg.p}, {"draws", cfg.draws}, {"n", cfg.n}, {"reps", cfg.reps},
                      {"seed", cfg.seed}}},
          {"passed", passed},
          {"suites", suites}};
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detection of weak spikes in high-dimensional covariance from sample eigenvalues"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  EnvelopeConfig env;
  auto* c_env = app.add_subcommand("envelope", "Asymptotic power envelopes of eigenvalue-based tests");
  add_dimensions(c_env, env.dims);
  c_env->add_option("--r", env.r, "Number of spikes");
  c_env->add_option("--h", env.h, "Spike sizes (one value is repeated r times)")->delimiter(',');
  c_env->add_option("--size", env.size, "Test size");
  c_env->add_option("--grid-points", env.grid_points, "Grid points per spike axis");
  c_env->add_option("--h-max", env.h_max, "Upper end of the grid");
  c_env->add_option("--format", env.output.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  c_env->add_option("--output,-o", env.output.path, "Output file (default stdout)");

  DetectConfig det;
  det.output.format = "json";
  auto* c_det = app.add_subcommand("detect", "Likelihood ratio statistics for an eigenvalue file");
  c_det->add_option("--eigenvalues", det.eigenvalues, "File with one eigenvalue per line")->required();
  c_det->add_option("--n", det.n, "Number of observations")->required();
  c_det->add_option("--p", det.p, "Dimension")->required();
  c_det->add_option("--h", det.h, "Spike sizes for log L, comma separated");
  c_det->add_option("--r", det.r, "Spike count of the sup-LR grid");
  c_det->add_option("--variant", det.variant, "lambda (known variance) or mu (unknown variance)");
  c_det->add_option("--method", det.method, "auto, exact or laplace");
  c_det->add_option("--grid-points", det.grid_points, "Grid points per spike axis");
  c_det->add_option("--h-max", det.h_max, "Upper end of the grid");
  c_det->add_option("--field-draws", det.field_draws, "Draws of the limiting field");
  c_det->add_option("--size", det.size, "Test size");
  c_det->add_option("--seed", det.seed, "Random seed")->required();
  c_det->add_option("--output,-o", det.output.path, "Output file (default stdout)");

  PowerConfig pow;
  auto* c_pow = app.add_subcommand("simulate-power", "Monte Carlo power curves");
  c_pow->add_option("--n", pow.n, "Number of observations")->required();
  c_pow->add_option("--p", pow.p, "Dimension")->required();
  c_pow->add_option("--alt", pow.alternatives, "Alternative spike vector, comma separated (repeatable)")->required();
  c_pow->add_option("--test", pow.test, "lr-lambda, lr-mu or point-optimal");
  c_pow->add_option("--target", pow.target, "Alternative of the point-optimal test");
  c_pow->add_option("--point-variant", pow.point_variant, "lambda or mu for the point-optimal test");
  c_pow->add_option("--reps", pow.reps, "Replications per alternative");
  c_pow->add_option("--seed", pow.seed, "Random seed")->required();
  c_pow->add_option("--size", pow.size, "Test size");
  c_pow->add_option("--h-max", pow.h_max, "Upper end of the sup-LR grid");
  c_pow->add_option("--grid-points", pow.grid_points, "Grid points per spike axis");
  c_pow->add_option("--field-draws", pow.field_draws, "Draws of the limiting field");
  c_pow->add_option("--format", pow.output.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  c_pow->add_option("--output,-o", pow.output.path, "Output file (default stdout)");

  ValidateConfig val;
  auto* c_val = app.add_subcommand("validate", "Cross-check the numerical routes against each other");
  c_val->add_option("--suite", val.suite, "all, hciz, jack, spectral-moments or null-moments");
  c_val->add_option("--p", val.p, "Dimension of the HCIZ instances");
  c_val->add_option("--draws", val.draws, "Haar Monte Carlo draws");
  c_val->add_option("--n", val.n, "n = p of the null batch");
  c_val->add_option("--reps", val.reps, "Replications of the null batch");
  c_val->add_option("--seed", val.seed, "Random seed");
  c_val->add_option("--output,-o", val.output.path, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (c_env->parsed()) {
      const auto rows = envelope_table(env);
      emit(env.output, out, [&](std::ostream& os) { write_envelope(env, rows, os); });
      return kExitOk;
    }
    if (c_det->parsed()) {
      const auto values = read_eigenvalue_file(det.eigenvalues);
      const json rep = detect_report(det, values);
      emit(det.output, out, [&](std::ostream& os) { os << rep.dump(2) << "\n"; });
      return kExitOk;
    }
    if (c_pow->parsed()) {
      const auto rows = power_table(pow);
      emit(pow.output, out, [&](std::ostream& os) { write_power(pow, rows, os); });
      return kExitOk;
    }
    if (c_val->parsed()) {
      bool passed = false;
      const json rep = validate_report(val, passed);
      emit(val.output, out, [&](std::ostream& os) { os << rep.dump(2) << "\n"; });
      if (!passed) err << "validation failed\n";
      return passed ? kExitOk : kExitValidation;
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DegenerateArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitInput;
}

}  // namespace spikedet::cli
