#pragma once

// Randomized checks of the error bounds the library relies on. Shared by the
// command-line `verify` command and the acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "bspai/bucketed.hpp"
#include "bspai/dense.hpp"
#include "bspai/precision.hpp"
#include "bspai/refine.hpp"
#include "bspai/sparse_matrix.hpp"
#include "bspai/synthetic.hpp"

namespace bspai {

struct BoundCheck {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_error = 0.0;
  double bound = 0.0;       // for the worst trial
  double worst_ratio = 0.0;  // max over trials of error / bound

  bool ok() const { return violations == 0; }

  void record(double error, double b) {
    ++trials;
    const double ratio = error / b;
    if (!(error <= b)) ++violations;
    if (ratio > worst_ratio || trials == 1) {
      worst_ratio = ratio;
      worst_error = error;
      bound = b;
    }
  }

  void merge(const BoundCheck& o) {
    trials += o.trials;
    violations += o.violations;
    if (o.trials > 0 && o.worst_ratio > worst_ratio) {
      worst_ratio = o.worst_ratio;
      worst_error = o.worst_error;
      bound = o.bound;
    }
  }
};

/// Random vector with unit 2-norm.
inline Vector random_unit_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vector x(n);
  double s = 0.0;
  do {
    for (double& v : x) v = g(rng);
    s = norm2(x);
  } while (s == 0.0);
  for (double& v : x) v /= s;
  return x;
}

/// eps_nw of bspmv(bucketed(M), x) against M x for `trials` random unit
/// vectors, bounded by (q-1) u_1 + c eps_b.
inline BoundCheck check_bspmv_bound(const SparseMatrix& m, const BucketScheme& scheme, std::size_t trials,
                                    std::uint64_t seed, CConstantForm form = CConstantForm::printed) {
  const BucketedMatrix mb = build_buckets(m, scheme);
  const double q = static_cast<double>(scheme.q());
  const double bound = (q - 1.0) * scheme.precisions.front().unit_roundoff + c_constant(mb, form) * scheme.eps_target;
  std::mt19937_64 rng(seed);
  BoundCheck out;
  for (std::size_t t = 0; t < trials; ++t) {
    const Vector x = random_unit_vector(m.cols(), rng);
    out.record(normwise_backward_error(m, x, bspmv(mb, x)), bound);
  }
  return out;
}

/// eps_nw of the uniform SpMV in `fmt` over `trials` random sparse matrices,
/// bounded by p u with p the largest number of nonzeros in a row.
inline BoundCheck check_uniform_spmv_bound(const FpFormat& fmt, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> size(2, 60);
  std::uniform_real_distribution<double> density(0.02, 0.5);
  std::uniform_real_distribution<double> expo(-3.0, 3.0);
  BoundCheck out;
  for (std::size_t t = 0; t < trials; ++t) {
    const Index n = size(rng);
    std::vector<Triplet> trip;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const double dens = density(rng);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    for (Index i = 0; i < n; ++i) {
      trip.push_back({i, i, uni(rng) * std::pow(10.0, expo(rng)) + 1e-300});
      for (Index j = 0; j < n; ++j) {
        if (j != i && coin(rng) < dens) trip.push_back({i, j, uni(rng) * std::pow(10.0, expo(rng))});
      }
    }
    // Entries and x are representable in fmt, so only the arithmetic rounds.
    for (Triplet& e : trip) e.value = round_to(e.value, fmt);
    std::erase_if(trip, [](const Triplet& e) { return e.value == 0.0; });
    if (trip.empty()) trip.push_back({0, 0, 1.0});
    const SparseMatrix a = SparseMatrix::from_triplets(n, n, std::move(trip));
    Vector x = random_unit_vector(n, rng);
    for (double& v : x) v = round_to(v, fmt);
    if (norm_inf(x) == 0.0) x[0] = 1.0;
    Index p = 0;
    for (Index i = 0; i < n; ++i) p = std::max(p, a.row_cols(i).size());
    out.record(normwise_backward_error(a, x, spmv_uniform(a, x, fmt)), static_cast<double>(p) * fmt.unit_roundoff);
  }
  return out;
}

/// Upper bound on the normwise backward error of one correction solve:
/// 10^3 (u_g + (q u_p + (q-1) u_1 + c eps_b) kappa_inf(M)).
inline double correction_error_bound(const IrConfig& cfg, double c, double kappa_m) {
  const double q = static_cast<double>(cfg.bucket.q());
  const double u1 = cfg.bucket.precisions.front().unit_roundoff;
  return 1e3 * (cfg.fmt_g.unit_roundoff +
                (q * cfg.fmt_p.unit_roundoff + (q - 1.0) * u1 + c * cfg.bucket.eps_target) * kappa_m);
}

/// Checks every correction solve of a bucketed GMRES-IR run against
/// correction_error_bound().
inline BoundCheck check_correction_bound(const SparseMatrix& a, const IrConfig& cfg) {
  SpaiConfig sc = cfg.spai;
  sc.build_fmt = cfg.fmt_f;
  const SpaiResult spai = spai_right_preconditioner(a, sc);
  const Vector b = unit_rhs(a.rows(), cfg.fmt_w);
  const std::vector<DoubleDouble> x_ref = reference_solution(a, b);
  const IrReport rep = gmres_ir_bucketed(a, b, spai.m, cfg, x_ref);
  const double bound = correction_error_bound(cfg, rep.c_constant, kappa_inf(spai.m));
  BoundCheck out;
  for (const IrStep& s : rep.steps) out.record(s.correction_backward_error, bound);
  return out;
}

inline std::string describe(const BoundCheck& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu trials, %zu violations, worst %.3e vs bound %.3e (ratio %.3g)", c.trials,
                c.violations, c.worst_error, c.bound, c.worst_ratio);
  return buf;
}

}  // namespace bspai
