#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bspai/error.hpp"
#include "bspai/precision.hpp"

namespace bspai {

using Index = std::size_t;
using Vector = std::vector<double>;

struct Triplet {
  Index row;
  Index col;
  double value;
};

/// Compressed sparse row matrix. Immutable once built: column indices are
/// strictly increasing within each row and explicit zeros are pruned.
class SparseMatrix {
public:
  SparseMatrix() = default;

  SparseMatrix(Index n_rows, Index n_cols) : n_rows_(n_rows), n_cols_(n_cols), row_ptr_(n_rows + 1, 0) {}

  /// Builds from 0-based triplets in any order. Duplicate coordinates are an
  /// error; zero values are dropped.
  static SparseMatrix from_triplets(Index n_rows, Index n_cols, std::vector<Triplet> entries) {
    for (const Triplet& t : entries) {
      if (t.row >= n_rows || t.col >= n_cols) {
        throw DimensionError("triplet (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                             ") outside a " + std::to_string(n_rows) + "x" + std::to_string(n_cols) + " matrix");
      }
    }
    std::sort(entries.begin(), entries.end(),
              [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
    for (std::size_t k = 1; k < entries.size(); ++k) {
      if (entries[k].row == entries[k - 1].row && entries[k].col == entries[k - 1].col) {
        throw Error("duplicate entry at (" + std::to_string(entries[k].row + 1) + "," +
                    std::to_string(entries[k].col + 1) + ")");
      }
    }
    SparseMatrix m(n_rows, n_cols);
    for (const Triplet& t : entries) {
      if (t.value == 0.0) continue;
      ++m.row_ptr_[t.row + 1];
      m.col_idx_.push_back(t.col);
      m.values_.push_back(t.value);
    }
    std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
    return m;
  }

  /// Takes ownership of raw CSR arrays; validates every structural invariant.
  static SparseMatrix from_csr(Index n_rows, Index n_cols, std::vector<Index> row_ptr, std::vector<Index> col_idx,
                               std::vector<double> values) {
    if (row_ptr.size() != n_rows + 1 || row_ptr.front() != 0 || row_ptr.back() != col_idx.size() ||
        col_idx.size() != values.size()) {
      throw DimensionError("inconsistent CSR arrays");
    }
    std::vector<Triplet> t;
    t.reserve(values.size());
    for (Index i = 0; i < n_rows; ++i) {
      if (row_ptr[i] > row_ptr[i + 1]) throw DimensionError("row_ptr is not monotone");
      for (Index p = row_ptr[i]; p < row_ptr[i + 1]; ++p) t.push_back({i, col_idx[p], values[p]});
    }
    return from_triplets(n_rows, n_cols, std::move(t));
  }

  static SparseMatrix identity(Index n) {
    std::vector<Triplet> t;
    for (Index i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  static SparseMatrix diagonal(std::span<const double> d) {
    std::vector<Triplet> t;
    for (Index i = 0; i < d.size(); ++i) t.push_back({i, i, d[i]});
    return from_triplets(d.size(), d.size(), std::move(t));
  }

  Index rows() const { return n_rows_; }
  Index cols() const { return n_cols_; }
  Index nnz() const { return values_.size(); }

  const std::vector<Index>& row_ptr() const { return row_ptr_; }
  const std::vector<Index>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const Index> row_cols(Index i) const {
    return {col_idx_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }
  std::span<const double> row_values(Index i) const {
    return {values_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
  }

  /// a_ij, or 0 when (i,j) is outside the pattern.
  double at(Index i, Index j) const {
    const auto cols = row_cols(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return values_[row_ptr_[i] + static_cast<Index>(it - cols.begin())];
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (Index i = 0; i < n_rows_; ++i) {
      for (Index p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) t.push_back({i, col_idx_[p], values_[p]});
    }
    return t;
  }

  SparseMatrix transpose() const {
    std::vector<Triplet> t = triplets();
    for (Triplet& e : t) std::swap(e.row, e.col);
    return from_triplets(n_cols_, n_rows_, std::move(t));
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

private:
  Index n_rows_ = 0;
  Index n_cols_ = 0;
  std::vector<Index> row_ptr_{0};
  std::vector<Index> col_idx_;
  std::vector<double> values_;
};

/// Positive diagonal scaling factors.
struct ScalingDiag {
  Vector d;
};

/// Scales the columns of A^T so each has largest magnitude exactly 1.
/// Returns B = A^T D with d_j = 1 / max_i |(A^T)_ij|.
inline std::pair<SparseMatrix, ScalingDiag> column_scale_transpose(const SparseMatrix& a) {
  // Column j of A^T is row j of A.
  ScalingDiag scale{Vector(a.rows(), 0.0)};
  Vector row_max(a.rows(), 0.0);
  for (Index j = 0; j < a.rows(); ++j) {
    for (double v : a.row_values(j)) row_max[j] = std::max(row_max[j], std::fabs(v));
    if (row_max[j] == 0.0) throw SingularMatrixError("row " + std::to_string(j + 1) + " of A is zero; scaling undefined");
    scale.d[j] = 1.0 / row_max[j];
  }
  std::vector<Triplet> t;
  t.reserve(a.nnz());
  for (Index i = 0; i < a.rows(); ++i) {
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    // Divide rather than multiply by d so the column maximum is exactly 1.
    for (Index p = 0; p < cols.size(); ++p) t.push_back({cols[p], i, vals[p] / row_max[i]});
  }
  return {SparseMatrix::from_triplets(a.cols(), a.rows(), std::move(t)), std::move(scale)};
}

/// y = A x with each multiply and add rounded to `fmt`, accumulating left to
/// right in column order.
inline Vector spmv_uniform(const SparseMatrix& a, std::span<const double> x, const FpFormat& fmt) {
  if (x.size() != a.cols()) throw DimensionError("spmv: vector length does not match matrix columns");
  Vector y(a.rows(), 0.0);
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& va = a.values();
  if (fmt.kind == FormatKind::dbl) {
    for (Index i = 0; i < a.rows(); ++i) {
      double s = 0.0;
      for (Index p = rp[i]; p < rp[i + 1]; ++p) s += va[p] * x[ci[p]];
      y[i] = s;
    }
    return y;
  }
  const Arith ar(fmt);
  for (Index i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (Index p = rp[i]; p < rp[i + 1]; ++p) s = ar.add(s, ar.mul(va[p], x[ci[p]]));
    y[i] = s;
  }
  return y;
}

/// y = A x with the sum formed in double-double (exact products).
inline std::vector<DoubleDouble> spmv_quad(const SparseMatrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) throw DimensionError("spmv: vector length does not match matrix columns");
  std::vector<DoubleDouble> y(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    DoubleDouble s;
    const auto cols = a.row_cols(i);
    const auto vals = a.row_values(i);
    for (Index p = 0; p < cols.size(); ++p) s += dd_detail::two_prod(vals[p], x[cols[p]]);
    y[i] = s;
  }
  return y;
}

inline double norm_inf(const SparseMatrix& a) {
  double mx = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row_values(i)) s += std::fabs(v);
    mx = std::max(mx, s);
  }
  return mx;
}

inline double norm_frob(const SparseMatrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

inline double norm_max(const SparseMatrix& a) {
  double mx = 0.0;
  for (double v : a.values()) mx = std::max(mx, std::fabs(v));
  return mx;
}

inline double norm_inf(std::span<const double> x) {
  double mx = 0.0;
  for (double v : x) mx = std::max(mx, std::fabs(v));
  return mx;
}

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

/// Sparse product A*B in double (used for diagnostics such as M*A).
inline SparseMatrix multiply(const SparseMatrix& a, const SparseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("multiply: inner dimensions differ");
  std::vector<Triplet> t;
  Vector acc(b.cols(), 0.0);
  std::vector<char> used(b.cols(), 0);
  std::vector<Index> touched;
  for (Index i = 0; i < a.rows(); ++i) {
    touched.clear();
    const auto ac = a.row_cols(i);
    const auto av = a.row_values(i);
    for (Index p = 0; p < ac.size(); ++p) {
      const auto bc = b.row_cols(ac[p]);
      const auto bv = b.row_values(ac[p]);
      for (Index q = 0; q < bc.size(); ++q) {
        if (!used[bc[q]]) {
          used[bc[q]] = 1;
          touched.push_back(bc[q]);
        }
        acc[bc[q]] += av[p] * bv[q];
      }
    }
    for (Index j : touched) {
      t.push_back({i, j, acc[j]});
      acc[j] = 0.0;
      used[j] = 0;
    }
  }
  return SparseMatrix::from_triplets(a.rows(), b.cols(), std::move(t));
}

}  // namespace bspai
