#pragma once

// Left-preconditioned MGS-GMRES in simulated mixed precision. Products with
// A run in u_p, the preconditioner is whatever operator the caller supplies
// (usually the adaptive-precision SpMV), and everything else (orthogonalization,
// Givens rotations, the small triangular solve, the solution update) runs in
// the GMRES working precision u_g. No restarts.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "bspai/bucketed.hpp"
#include "bspai/error.hpp"
#include "bspai/precision.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

struct GmresConfig {
  double tol = 1e-8;
  std::size_t max_iters = 0;  // 0 means n
  FpFormat fmt_work = kDouble;
  FpFormat fmt_matvec = kDouble;
};

struct GmresResult {
  Vector solution;
  std::size_t iterations = 0;
  std::vector<double> residual_history;  // Arnoldi estimate of ||M(r - A d)|| / ||M r||, starting at 1
  bool converged = false;
};

namespace krylov_detail {

inline double dot(std::span<const double> x, std::span<const double> y, const Arith& ar) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s = ar.add(s, ar.mul(x[i], y[i]));
  return s;
}

inline void check_finite(std::span<const double> v, std::size_t iteration, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw GmresError(iteration, std::string("non-finite value in ") + what);
  }
}

}  // namespace krylov_detail

/// Solves (M A) d = M r. `apply_a(v)` must return A v and `apply_m(w)` must
/// return M w; both results are rounded to u_g before use.
template <class ApplyA, class ApplyM>
GmresResult gmres_left_op(ApplyA&& apply_a, ApplyM&& apply_m, std::span<const double> r, const GmresConfig& cfg) {
  using krylov_detail::check_finite;
  using krylov_detail::dot;
  const std::size_t n = r.size();
  if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw Error("GMRES tolerance must lie in (0, 1)");
  const std::size_t max_iters = cfg.max_iters == 0 ? n : cfg.max_iters;
  const Arith g(cfg.fmt_work);

  GmresResult out;
  out.solution.assign(n, 0.0);
  out.residual_history.push_back(1.0);

  Vector s = apply_m(r);
  if (s.size() != n) throw DimensionError("GMRES: preconditioner output has the wrong length");
  for (double& v : s) v = g.round(v);
  check_finite(s, 0, "the preconditioned right-hand side");
  const double beta = g.sqrt(dot(s, s, g));
  if (beta == 0.0) {
    out.converged = true;
    return out;
  }

  std::vector<Vector> basis;
  basis.reserve(std::min<std::size_t>(max_iters + 1, n + 1));
  basis.emplace_back(n);
  for (std::size_t i = 0; i < n; ++i) basis[0][i] = g.div(s[i], beta);

  std::vector<std::vector<double>> h;  // h[j] holds column j (rows 0..j)
  std::vector<double> cs, sn;
  std::vector<double> rhs{beta};

  std::size_t k = 0;
  for (std::size_t j = 0; j < max_iters; ++j) {
    Vector w = apply_a(std::span<const double>(basis[j]));
    for (double& v : w) v = g.round(v);
    Vector z = apply_m(std::span<const double>(w));
    for (double& v : z) v = g.round(v);
    check_finite(z, j + 1, "the preconditioned Arnoldi vector");

    std::vector<double> col(j + 2, 0.0);
    for (std::size_t i = 0; i <= j; ++i) {
      const double hij = dot(basis[i], z, g);
      col[i] = hij;
      const Vector& vi = basis[i];
      for (std::size_t l = 0; l < n; ++l) z[l] = g.sub(z[l], g.mul(hij, vi[l]));
    }
    const double hnext = g.sqrt(dot(z, z, g));
    col[j + 1] = hnext;

    for (std::size_t i = 0; i < j; ++i) {
      const double t = g.add(g.mul(cs[i], col[i]), g.mul(sn[i], col[i + 1]));
      col[i + 1] = g.sub(g.mul(cs[i], col[i + 1]), g.mul(sn[i], col[i]));
      col[i] = t;
    }
    const double denom = g.sqrt(g.add(g.mul(col[j], col[j]), g.mul(hnext, hnext)));
    if (denom == 0.0) throw GmresError(j + 1, "Hessenberg column vanished (singular preconditioned operator)");
    const double c = g.div(col[j], denom);
    const double sv = g.div(hnext, denom);
    cs.push_back(c);
    sn.push_back(sv);
    col[j] = denom;
    col[j + 1] = 0.0;
    rhs.push_back(g.mul(-sv, rhs[j]));
    rhs[j] = g.mul(c, rhs[j]);
    h.push_back(std::move(col));
    k = j + 1;

    const double est = std::fabs(rhs[j + 1]) / beta;
    out.residual_history.push_back(est);
    if (!std::isfinite(est)) throw GmresError(j + 1, "non-finite residual estimate");
    if (hnext == 0.0 || est <= cfg.tol) {
      out.converged = true;
      break;
    }
    basis.emplace_back(n);
    for (std::size_t l = 0; l < n; ++l) basis[j + 1][l] = g.div(z[l], hnext);
  }

  // Back substitution H(0:k,0:k) y = rhs(0:k), then d = V y.
  std::vector<double> y(k, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double t = rhs[i];
    for (std::size_t c = i + 1; c < k; ++c) t = g.sub(t, g.mul(h[c][i], y[c]));
    y[i] = g.div(t, h[i][i]);
  }
  for (std::size_t i = 0; i < k; ++i) {
    const Vector& vi = basis[i];
    for (std::size_t l = 0; l < n; ++l) out.solution[l] = g.add(out.solution[l], g.mul(y[i], vi[l]));
  }
  check_finite(out.solution, k, "the solution");
  out.iterations = k;
  return out;
}

/// GMRES on M A d = M r with A applied in u_p and M through the
/// adaptive-precision SpMV.
inline GmresResult gmres_left(const SparseMatrix& a, const BucketedMatrix& m, std::span<const double> r,
                              const GmresConfig& cfg) {
  if (a.rows() != a.cols() || a.rows() != r.size() || m.rows() != a.rows() || m.cols() != a.rows()) {
    throw DimensionError("gmres_left: dimensions do not conform");
  }
  const FpFormat fmt_p = cfg.fmt_matvec;
  return gmres_left_op([&](std::span<const double> v) { return spmv_uniform(a, v, fmt_p); },
                       [&](std::span<const double> w) { return bspmv(m, w); }, r, cfg);
}

}  // namespace bspai
