#pragma once

// Five-precision GMRES-based iterative refinement with a (bucketed) sparse
// approximate inverse as left preconditioner.
//
//   u_f  builds the SPAI and forms x_0 = M b
//   u    working precision: x_i, r_i and d_i are stored in u
//   u_r  residual r_i = b - A x_i
//   u_g  GMRES working precision
//   u_p  products with A inside GMRES

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bspai/bucketed.hpp"
#include "bspai/dense.hpp"
#include "bspai/double_double.hpp"
#include "bspai/error.hpp"
#include "bspai/krylov.hpp"
#include "bspai/precision.hpp"
#include "bspai/sparse_matrix.hpp"
#include "bspai/spai.hpp"

namespace bspai {

struct IrConfig {
  FpFormat fmt_f = kDouble;
  FpFormat fmt_w = kDouble;
  FpFormat fmt_r = kQuad;
  FpFormat fmt_g = kDouble;
  FpFormat fmt_p = kDouble;
  double tau = 1e-8;
  std::size_t i_max = 10;
  SpaiConfig spai;
  BucketScheme bucket = BucketScheme::ladder_for(kDouble, 0x1p-53);
  // Stopping thresholds as multiples of u; 0 selects max(10, sqrt(n)).
  double theta_f = 0.0;
  double theta_b = 0.0;
  // Stop early once the forward error has grown on two consecutive steps.
  bool divergence_guard = true;

  /// Named precision settings (u_f, u, u_r): "ddq", "sdq", "ssd", "hsd".
  /// u_g = u_p = u, tau = 1e-8 for double working precision and 1e-4 for
  /// single, and the matching bucket ladder with eps_b = u_1.
  static IrConfig preset(std::string_view name) {
    IrConfig c;
    if (name == "ddq") {
      c.fmt_f = kDouble, c.fmt_w = kDouble, c.fmt_r = kQuad;
    } else if (name == "sdq") {
      c.fmt_f = kSingle, c.fmt_w = kDouble, c.fmt_r = kQuad;
    } else if (name == "ssd") {
      c.fmt_f = kSingle, c.fmt_w = kSingle, c.fmt_r = kDouble;
    } else if (name == "hsd") {
      c.fmt_f = kHalf, c.fmt_w = kSingle, c.fmt_r = kDouble;
    } else {
      throw Error("unknown precision setting '" + std::string(name) + "'");
    }
    c.fmt_g = c.fmt_w;
    c.fmt_p = c.fmt_w;
    c.tau = c.fmt_w.kind == FormatKind::dbl ? 1e-8 : 1e-4;
    c.spai.build_fmt = c.fmt_f;
    c.bucket = BucketScheme::ladder_for(c.fmt_w, c.fmt_w.unit_roundoff);
    return c;
  }

  void validate() const {
    if (!(fmt_f.unit_roundoff >= fmt_w.unit_roundoff && fmt_w.unit_roundoff >= fmt_r.unit_roundoff)) {
      throw Error("precisions must satisfy u_f >= u >= u_r");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw Error("GMRES tolerance must lie in (0, 1)");
    bucket.validate();
  }
};

struct IrStep {
  std::size_t gmres_iterations = 0;
  bool gmres_converged = false;
  double forward_error = 0.0;   // of x_{i+1}
  double backward_error = 0.0;  // of x_{i+1}
  // ||s - (MA) d||_inf / (||MA||_inf ||d||_inf + ||s||_inf) for the
  // correction solve, with s = M r_i and M the unbucketed preconditioner.
  double correction_backward_error = 0.0;
};

struct IrReport {
  std::vector<IrStep> steps;
  double initial_forward_error = 0.0;
  double initial_backward_error = 0.0;
  bool converged = false;
  bool diverged = false;
  std::size_t total_gmres_iterations = 0;
  std::optional<double> kappa_inf_ma;
  std::vector<Index> occupancy;
  double storage_ratio = 1.0;
  Index preconditioner_nnz = 0;
  double c_constant = 0.0;
  Vector solution;

  std::vector<std::size_t> iterations_per_step() const {
    std::vector<std::size_t> its;
    for (const IrStep& s : steps) its.push_back(s.gmres_iterations);
    return its;
  }
};

/// x solving A x = b by dense LU with partial pivoting in double-double.
inline std::vector<DoubleDouble> reference_solution(const SparseMatrix& a, std::span<const double> b) {
  if (a.rows() != a.cols() || b.size() != a.rows()) throw DimensionError("reference_solution: dimensions do not conform");
  const LuFactorization<DoubleDouble> lu(DenseMatrix<DoubleDouble>::from_sparse(a));
  const std::vector<DoubleDouble> rhs(b.begin(), b.end());
  std::vector<DoubleDouble> x = lu.solve(rhs);
  for (const DoubleDouble& v : x) {
    if (!isfinite(v)) throw SingularMatrixError("reference solution is not finite; A is singular to working accuracy");
  }
  return x;
}

inline Vector to_double(std::span<const DoubleDouble> x) {
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].hi + x[i].lo;
  return out;
}

/// b - A x formed in double-double.
inline std::vector<DoubleDouble> residual_quad(const SparseMatrix& a, std::span<const double> x, std::span<const double> b) {
  std::vector<DoubleDouble> r = spmv_quad(a, x);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = DoubleDouble(b[i]) - r[i];
  return r;
}

inline double forward_error(std::span<const double> x, std::span<const DoubleDouble> x_ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const DoubleDouble d = DoubleDouble(x[i]) - x_ref[i];
    num = std::max(num, std::fabs(d.hi));
    den = std::max(den, std::fabs(x_ref[i].hi));
  }
  return den == 0.0 ? num : num / den;
}

/// ||b - A x||_inf / (||A||_inf ||x||_inf + ||b||_inf), residual in double-double.
inline double normwise_relative_backward_error(const SparseMatrix& a, std::span<const double> x, std::span<const double> b) {
  const std::vector<DoubleDouble> r = residual_quad(a, x, b);
  double num = 0.0;
  for (const DoubleDouble& v : r) num = std::max(num, std::fabs(v.hi));
  const double den = norm_inf(a) * norm_inf(x) + norm_inf(b);
  return den == 0.0 ? num : num / den;
}

/// Right-hand side with equal components and unit 2-norm, stored in `fmt`.
inline Vector unit_rhs(Index n, const FpFormat& fmt) {
  return Vector(n, round_to(1.0 / std::sqrt(static_cast<double>(n)), fmt));
}

namespace refine_detail {

/// r = b - A x in u_r, stored in u.
inline Vector residual_in(const SparseMatrix& a, std::span<const double> x, std::span<const double> b,
                          const FpFormat& fmt_r, const FpFormat& fmt_w) {
  Vector r(b.size());
  if (fmt_r.kind == FormatKind::quad) {
    const std::vector<DoubleDouble> rq = residual_quad(a, x, b);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = round_to(round_to(rq[i], kDouble).hi, fmt_w);
    return r;
  }
  const Arith ar(fmt_r);
  const Vector ax = spmv_uniform(a, x, fmt_r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = round_to(ar.sub(b[i], ax[i]), fmt_w);
  return r;
}

inline double correction_backward_error(const SparseMatrix& ma, const SparseMatrix& m, std::span<const double> r,
                                        std::span<const double> d) {
  const std::vector<DoubleDouble> s = spmv_quad(m, r);
  const std::vector<DoubleDouble> md = spmv_quad(ma, d);
  double num = 0.0, ns = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num = std::max(num, std::fabs((s[i] - md[i]).hi));
    ns = std::max(ns, std::fabs(s[i].hi));
  }
  const double den = norm_inf(ma) * norm_inf(d) + ns;
  return den == 0.0 ? num : num / den;
}

}  // namespace refine_detail

struct IrOptions {
  bool compute_kappa = false;  // kappa_inf(M_eff A) via a dense inverse
};

/// Refinement loop with an arbitrary preconditioner operator `apply_m`
/// (w -> M w). `m_exact` is the unbucketed preconditioner, used only for
/// instrumentation; `m_effective` is what `apply_m` applies.
template <class ApplyM>
IrReport gmres_ir_with(const SparseMatrix& a, std::span<const double> b, ApplyM&& apply_m, const SparseMatrix& m_exact,
                       const SparseMatrix& m_effective, const IrConfig& cfg, std::span<const DoubleDouble> x_ref,
                       const IrOptions& opts = {}) {
  cfg.validate();
  const Index n = a.rows();
  if (a.cols() != n || b.size() != n || x_ref.size() != n) throw DimensionError("GMRES-IR: dimensions do not conform");
  const double theta_default = std::max(10.0, std::sqrt(static_cast<double>(n)));
  const double theta_f = cfg.theta_f > 0.0 ? cfg.theta_f : theta_default;
  const double theta_b = cfg.theta_b > 0.0 ? cfg.theta_b : theta_default;
  const double u = cfg.fmt_w.unit_roundoff;
  const Arith w(cfg.fmt_w);

  Vector bw(b.begin(), b.end());
  for (double& v : bw) v = w.round(v);

  IrReport rep;
  const SparseMatrix ma = multiply(m_exact, a);
  if (opts.compute_kappa) rep.kappa_inf_ma = kappa_inf(multiply(m_effective, a));

  // x_0 = M b in u_f, stored in u.
  Vector x = apply_m(std::span<const double>(bw));
  for (double& v : x) v = w.round(round_to(v, cfg.fmt_f));

  GmresConfig gcfg;
  gcfg.tol = cfg.tau;
  gcfg.max_iters = n;
  gcfg.fmt_work = cfg.fmt_g;
  gcfg.fmt_matvec = cfg.fmt_p;

  double fe = forward_error(x, x_ref);
  double be = normwise_relative_backward_error(a, x, bw);
  rep.initial_forward_error = fe;
  rep.initial_backward_error = be;
  int growth_streak = 0;
  for (std::size_t i = 0;; ++i) {
    if (fe <= theta_f * u && be <= theta_b * u) {
      rep.converged = true;
      break;
    }
    if (i >= cfg.i_max || growth_streak >= 2) break;

    const Vector r = refine_detail::residual_in(a, x, bw, cfg.fmt_r, cfg.fmt_w);
    const FpFormat fmt_p = cfg.fmt_p;
    GmresResult gm = gmres_left_op([&](std::span<const double> v) { return spmv_uniform(a, v, fmt_p); }, apply_m, r, gcfg);
    for (double& v : gm.solution) v = w.round(v);
    for (Index k = 0; k < n; ++k) x[k] = w.add(x[k], gm.solution[k]);

    IrStep step;
    step.gmres_iterations = gm.iterations;
    step.gmres_converged = gm.converged;
    step.correction_backward_error = refine_detail::correction_backward_error(ma, m_exact, r, gm.solution);
    const double prev = fe;
    fe = forward_error(x, x_ref);
    be = normwise_relative_backward_error(a, x, bw);
    step.forward_error = fe;
    step.backward_error = be;
    rep.steps.push_back(step);
    rep.total_gmres_iterations += gm.iterations;
    if (cfg.divergence_guard) growth_streak = fe > prev ? growth_streak + 1 : 0;
    if (!std::isfinite(fe)) break;
  }
  rep.diverged = !rep.converged && growth_streak >= 2;
  rep.solution = std::move(x);
  return rep;
}

/// GMRES-IR with the preconditioner stored and applied through buckets.
inline IrReport gmres_ir_bucketed(const SparseMatrix& a, std::span<const double> b, const SparseMatrix& m,
                                  const IrConfig& cfg, std::span<const DoubleDouble> x_ref, const IrOptions& opts = {}) {
  const BucketedMatrix mb = build_buckets(m, cfg.bucket);
  IrReport rep = gmres_ir_with(a, b, [&](std::span<const double> v) { return bspmv(mb, v); }, m, mb.effective_matrix(),
                               cfg, x_ref, opts);
  rep.occupancy = mb.occupancy();
  rep.storage_ratio = storage_ratio(mb);
  rep.preconditioner_nnz = mb.nnz();
  rep.c_constant = c_constant(mb);
  return rep;
}

/// Uniform-precision baseline: M applied by an ordinary SpMV in u_p.
inline IrReport gmres_ir_uniform(const SparseMatrix& a, std::span<const double> b, const SparseMatrix& m,
                                 const IrConfig& cfg, std::span<const DoubleDouble> x_ref, const IrOptions& opts = {}) {
  const FpFormat fmt_p = cfg.fmt_p;
  IrReport rep = gmres_ir_with(a, b, [&](std::span<const double> v) { return spmv_uniform(m, v, fmt_p); }, m, m, cfg,
                               x_ref, opts);
  rep.occupancy.assign(cfg.bucket.q(), 0);
  rep.occupancy.front() = m.nnz();
  rep.storage_ratio = 1.0;
  rep.preconditioner_nnz = m.nnz();
  return rep;
}

/// Full pipeline: SPAI of A^T in u_f, bucketing, then refinement.
inline IrReport bspai_gmres_ir(const SparseMatrix& a, std::span<const double> b, const IrConfig& cfg,
                               const IrOptions& opts = {}) {
  cfg.validate();
  SpaiConfig sc = cfg.spai;
  sc.build_fmt = cfg.fmt_f;
  const SpaiResult spai = spai_right_preconditioner(a, sc);
  Vector bw(b.begin(), b.end());
  for (double& v : bw) v = round_to(v, cfg.fmt_w);
  const std::vector<DoubleDouble> x_ref = reference_solution(a, bw);
  return gmres_ir_bucketed(a, bw, spai.m, cfg, x_ref, opts);
}

/// Same pipeline with the uniform-precision preconditioner application.
inline IrReport spai_gmres_ir(const SparseMatrix& a, std::span<const double> b, const IrConfig& cfg,
                              const IrOptions& opts = {}) {
  cfg.validate();
  SpaiConfig sc = cfg.spai;
  sc.build_fmt = cfg.fmt_f;
  const SpaiResult spai = spai_right_preconditioner(a, sc);
  Vector bw(b.begin(), b.end());
  for (double& v : bw) v = round_to(v, cfg.fmt_w);
  const std::vector<DoubleDouble> x_ref = reference_solution(a, bw);
  return gmres_ir_uniform(a, bw, spai.m, cfg, x_ref, opts);
}

}  // namespace bspai
