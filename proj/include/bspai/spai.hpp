#pragma once

// Sparse approximate inverse by Frobenius-norm minimization with adaptive
// pattern growth (Grote-Huckle style). Each column m_k of M ~ A^{-1} solves
//   min || e_k - A(:, J_k) m ||_2
// over a pattern J_k that is enlarged with the best-scoring candidate
// indices until the residual drops below eps_tol or alpha growth steps have
// been taken. The local least-squares problems are solved by Householder QR
// with every scalar operation rounded to the construction format.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bspai/error.hpp"
#include "bspai/precision.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

enum class InitialPattern { identity, pattern_of_a };

struct SpaiConfig {
  double eps_tol = 0.1;
  std::size_t alpha = std::numeric_limits<std::size_t>::max();  // growth steps per column
  std::size_t beta = 8;                                          // indices added per step
  InitialPattern initial_pattern = InitialPattern::identity;
  FpFormat build_fmt = kDouble;
  unsigned threads = 1;
};

enum class ColumnExit { reached_tolerance, hit_alpha_cap, no_candidates };

struct SpaiReport {
  std::vector<double> residual_norms;  // ||e_k - A m_k||_2, recomputed in double
  std::vector<std::size_t> pattern_sizes;
  std::vector<ColumnExit> exits;
  std::size_t capped_columns = 0;      // columns that stopped without reaching eps_tol
  std::size_t rank_deficient_columns = 0;
};

struct SpaiResult {
  SparseMatrix m;
  SpaiReport report;
};

namespace spai_detail {

struct ColumnSolution {
  std::vector<Index> pattern;
  std::vector<double> values;
  double residual = 0.0;
  ColumnExit exit = ColumnExit::reached_tolerance;
  bool rank_deficient = false;
};

/// Minimum-norm least squares in double; used when the local QR is rank
/// deficient.
inline std::vector<double> min_norm_solve(const std::vector<double>& a_colmajor, std::size_t rows, std::size_t cols,
                                          const std::vector<double>& rhs) {
  Eigen::Map<const Eigen::MatrixXd> a(a_colmajor.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(rows));
  const Eigen::VectorXd x = a.completeOrthogonalDecomposition().solve(b);
  return {x.data(), x.data() + x.size()};
}

/// Householder QR least squares in `ar`'s format. `a` is column-major
/// rows x cols and is overwritten. Returns false when R is numerically
/// singular.
inline bool householder_lstsq(std::vector<double>& a, std::size_t rows, std::size_t cols, std::vector<double> rhs,
                              const Arith& ar, std::vector<double>& x) {
  if (rows < cols) return false;
  std::vector<double> v(rows);
  double max_diag = 0.0;
  std::vector<double> diag(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    double* col = a.data() + c * rows;
    double sq = 0.0;
    for (std::size_t i = c; i < rows; ++i) sq = ar.add(sq, ar.mul(col[i], col[i]));
    const double nrm = ar.sqrt(sq);
    if (nrm == 0.0) return false;
    const double alpha = col[c] >= 0.0 ? -nrm : nrm;
    for (std::size_t i = c; i < rows; ++i) v[i] = col[i];
    v[c] = ar.sub(v[c], alpha);
    // v^T v = sq - 2 alpha x_c + alpha^2 computed directly for robustness.
    double vtv = 0.0;
    for (std::size_t i = c; i < rows; ++i) vtv = ar.add(vtv, ar.mul(v[i], v[i]));
    if (vtv == 0.0) return false;
    auto reflect = [&](double* y) {
      double dot = 0.0;
      for (std::size_t i = c; i < rows; ++i) dot = ar.add(dot, ar.mul(v[i], y[i]));
      const double f = ar.div(ar.mul(2.0, dot), vtv);
      for (std::size_t i = c; i < rows; ++i) y[i] = ar.sub(y[i], ar.mul(f, v[i]));
    };
    for (std::size_t c2 = c + 1; c2 < cols; ++c2) reflect(a.data() + c2 * rows);
    reflect(rhs.data());
    col[c] = alpha;
    diag[c] = alpha;
    max_diag = std::max(max_diag, std::fabs(alpha));
  }
  const double tol = static_cast<double>(rows) * ar.format().unit_roundoff * max_diag;
  for (std::size_t c = 0; c < cols; ++c) {
    if (std::fabs(diag[c]) <= tol) return false;
  }
  x.assign(cols, 0.0);
  for (std::size_t c = cols; c-- > 0;) {
    double s = rhs[c];
    for (std::size_t c2 = c + 1; c2 < cols; ++c2) s = ar.sub(s, ar.mul(a[c2 * rows + c], x[c2]));
    x[c] = ar.div(s, a[c * rows + c]);
  }
  return true;
}

/// Per-thread scratch sized to n.
struct Workspace {
  explicit Workspace(Index n) : row_pos(n, npos), is_candidate(n, 0), in_pattern(n, 0) {}
  static constexpr Index npos = std::numeric_limits<Index>::max();
  std::vector<Index> row_pos;     // position of a global row inside I_k
  std::vector<char> is_candidate;
  std::vector<char> in_pattern;
};

/// `a` gives rows of A, `at` gives rows of A^T (i.e. columns of A).
inline ColumnSolution solve_column(const SparseMatrix& a, const SparseMatrix& at, Index k, const SpaiConfig& cfg,
                                   Workspace& ws) {
  const Arith ar(cfg.build_fmt);
  ColumnSolution out;
  std::vector<Index>& pattern = out.pattern;
  if (cfg.initial_pattern == InitialPattern::identity) {
    pattern = {k};
  } else {
    const auto rows_of_col_k = at.row_cols(k);
    pattern.assign(rows_of_col_k.begin(), rows_of_col_k.end());
    if (pattern.empty()) pattern = {k};
  }

  std::vector<Index> shadow;
  std::vector<double> abar, abar_exact, ebar, mbar, s;
  for (std::size_t step = 0;; ++step) {
    // Shadow I_k: rows touched by the pattern columns, plus k itself so that
    // the local residual equals the full residual e_k - A m_k.
    shadow.clear();
    for (Index j : pattern) {
      for (Index i : at.row_cols(j)) {
        if (ws.row_pos[i] == Workspace::npos) {
          ws.row_pos[i] = 0;
          shadow.push_back(i);
        }
      }
    }
    if (ws.row_pos[k] == Workspace::npos) {
      ws.row_pos[k] = 0;
      shadow.push_back(k);
    }
    std::sort(shadow.begin(), shadow.end());
    for (std::size_t p = 0; p < shadow.size(); ++p) ws.row_pos[shadow[p]] = p;

    const std::size_t nr = shadow.size(), nc = pattern.size();
    abar_exact.assign(nr * nc, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto rows = at.row_cols(pattern[c]);
      const auto vals = at.row_values(pattern[c]);
      for (std::size_t p = 0; p < rows.size(); ++p) abar_exact[c * nr + ws.row_pos[rows[p]]] = vals[p];
    }
    abar.resize(abar_exact.size());
    for (std::size_t p = 0; p < abar.size(); ++p) abar[p] = ar.round(abar_exact[p]);
    ebar.assign(nr, 0.0);
    ebar[ws.row_pos[k]] = 1.0;

    std::vector<double> qr = abar;
    if (!householder_lstsq(qr, nr, nc, ebar, ar, mbar)) {
      mbar = min_norm_solve(abar, nr, nc, ebar);
      for (double& v : mbar) v = ar.round(v);
      out.rank_deficient = true;
    }

    // s = Abar m - e in the construction format.
    s.assign(nr, 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      const double mc = mbar[c];
      const double* col = abar.data() + c * nr;
      for (std::size_t i = 0; i < nr; ++i) {
        if (col[i] != 0.0) s[i] = ar.add(s[i], ar.mul(col[i], mc));
      }
    }
    s[ws.row_pos[k]] = ar.sub(s[ws.row_pos[k]], 1.0);

    // Exit test on the delivered column: ||e_k - A m_k||_2 in double.
    double exact_sq = 0.0;
    {
      std::vector<double> r(nr, 0.0);
      for (std::size_t c = 0; c < nc; ++c) {
        const double* col = abar_exact.data() + c * nr;
        for (std::size_t i = 0; i < nr; ++i) r[i] += col[i] * mbar[c];
      }
      r[ws.row_pos[k]] -= 1.0;
      for (double v : r) exact_sq += v * v;
    }
    out.residual = std::sqrt(exact_sq);

    auto finish = [&](ColumnExit why) {
      for (Index i : shadow) ws.row_pos[i] = Workspace::npos;
      out.values = mbar;
      out.exit = why;
      return out;
    };

    if (out.residual <= cfg.eps_tol) return finish(ColumnExit::reached_tolerance);
    if (step >= cfg.alpha) return finish(ColumnExit::hit_alpha_cap);

    // Candidates: columns j not in J_k with a_lj != 0 for some l in I_k.
    for (Index j : pattern) ws.in_pattern[j] = 1;
    std::vector<Index> candidates;
    for (Index l : shadow) {
      for (Index j : a.row_cols(l)) {
        if (!ws.in_pattern[j] && !ws.is_candidate[j]) {
          ws.is_candidate[j] = 1;
          candidates.push_back(j);
        }
      }
    }
    for (Index j : pattern) ws.in_pattern[j] = 0;
    for (Index j : candidates) ws.is_candidate[j] = 0;
    if (candidates.empty()) return finish(ColumnExit::no_candidates);
    std::sort(candidates.begin(), candidates.end());

    // rho_jk^2 = ||s||^2 - (s^T A_j(I))^2 / ||A_j(I)||^2, scored in double.
    double s_sq = 0.0;
    for (double v : s) s_sq += v * v;
    std::vector<double> rho(candidates.size());
    double rho_mean = 0.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto rows = at.row_cols(candidates[c]);
      const auto vals = at.row_values(candidates[c]);
      double dot = 0.0, nsq = 0.0;
      // The residual lives on I_k, but the norm of A e_j runs over the full column.
      for (std::size_t p = 0; p < rows.size(); ++p) {
        nsq += vals[p] * vals[p];
        const Index pos = ws.row_pos[rows[p]];
        if (pos != Workspace::npos) dot += s[pos] * vals[p];
      }
      const double r2 = nsq > 0.0 ? s_sq - dot * dot / nsq : s_sq;
      rho[c] = std::sqrt(std::max(r2, 0.0));
      rho_mean += rho[c];
    }
    rho_mean /= static_cast<double>(candidates.size());

    for (Index i : shadow) ws.row_pos[i] = Workspace::npos;

    // Up to beta argmin picks (smallest index on ties), each acceptable only
    // if rho_jk <= mean.
    std::vector<char> taken(candidates.size(), 0);
    std::size_t added = 0;
    for (std::size_t pick = 0; pick < cfg.beta; ++pick) {
      std::size_t best = candidates.size();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (!taken[c] && (best == candidates.size() || rho[c] < rho[best])) best = c;
      }
      if (best == candidates.size() || rho[best] > rho_mean) break;
      taken[best] = 1;
      pattern.push_back(candidates[best]);
      ++added;
    }
    if (added == 0) return finish(ColumnExit::no_candidates);
    std::sort(pattern.begin(), pattern.end());
  }
}

}  // namespace spai_detail

/// Builds M ~ A^{-1} column by column. Columns are independent, so any
/// thread count gives a bit-identical result.
inline SpaiResult spai_build(const SparseMatrix& a, const SpaiConfig& cfg) {
  if (a.rows() != a.cols()) throw DimensionError("SPAI requires a square matrix");
  if (!(cfg.eps_tol > 0.0)) throw Error("SPAI eps_tol must be positive");
  if (cfg.beta < 1) throw Error("SPAI beta must be at least 1");
  const Index n = a.rows();
  if (cfg.initial_pattern == InitialPattern::identity) {
    for (Index k = 0; k < n; ++k) {
      if (a.at(k, k) == 0.0) {
        throw SingularMatrixError("zero diagonal entry at (" + std::to_string(k + 1) + "," + std::to_string(k + 1) +
                                  "): the identity initial pattern yields a zero column; use the pattern of A");
      }
    }
  }
  const SparseMatrix at = a.transpose();
  std::vector<spai_detail::ColumnSolution> cols(n);

  const unsigned nthreads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(std::max<Index>(n, 1))));
  auto work = [&](unsigned tid) {
    spai_detail::Workspace ws(n);
    for (Index k = tid; k < n; k += nthreads) cols[k] = spai_detail::solve_column(a, at, k, cfg, ws);
  };
  if (nthreads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(work, t);
  }

  SpaiResult result;
  SpaiReport& rep = result.report;
  std::vector<Triplet> t;
  for (Index k = 0; k < n; ++k) {
    const auto& c = cols[k];
    for (std::size_t p = 0; p < c.pattern.size(); ++p) t.push_back({c.pattern[p], k, c.values[p]});
    rep.residual_norms.push_back(c.residual);
    rep.pattern_sizes.push_back(c.pattern.size());
    rep.exits.push_back(c.exit);
    if (c.exit != ColumnExit::reached_tolerance) ++rep.capped_columns;
    if (c.rank_deficient) ++rep.rank_deficient_columns;
  }
  result.m = SparseMatrix::from_triplets(n, n, std::move(t));
  return result;
}

/// Left preconditioner M ~ A^{-1} built from A^T: scale the columns of A^T,
/// run SPAI on the scaled matrix B = A^T D, and return M = M_B^T D.
inline SpaiResult spai_right_preconditioner(const SparseMatrix& a, const SpaiConfig& cfg) {
  auto [b, scale] = column_scale_transpose(a);
  SpaiResult built = spai_build(b, cfg);
  std::vector<Triplet> t = built.m.triplets();
  const Arith ar(cfg.build_fmt);
  for (Triplet& e : t) {
    std::swap(e.row, e.col);
    e.value = ar.mul(e.value, ar.round(scale.d[e.col]));
  }
  built.m = SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
  return built;
}

}  // namespace bspai
