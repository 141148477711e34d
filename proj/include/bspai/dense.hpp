#pragma once

// Small dense kernels for desk-scale diagnostics: LU with partial pivoting
// (generic over double and DoubleDouble), explicit inverses, and the
// condition numbers reported in the experiment tables.

#include <algorithm>
#include <cmath>
#include <utility>
#include <cstddef>
#include <span>
#include <vector>

#include "bspai/double_double.hpp"
#include "bspai/error.hpp"
#include "bspai/sparse_matrix.hpp"

namespace bspai {

template <class T>
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T(0.0)) {}

  static DenseMatrix from_sparse(const SparseMatrix& a) {
    DenseMatrix m(a.rows(), a.cols());
    for (const Triplet& t : a.triplets()) m(t.row, t.col) = T(t.value);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

namespace detail {
inline double magnitude(double x) { return std::fabs(x); }
inline double magnitude(const DoubleDouble& x) { return std::fabs(x.hi); }
}  // namespace detail

/// In-place LU factorization PA = LU with partial pivoting.
template <class T>
class LuFactorization {
public:
  explicit LuFactorization(DenseMatrix<T> a) : lu_(std::move(a)), perm_(lu_.rows()) {
    const std::size_t n = lu_.rows();
    if (lu_.cols() != n) throw DimensionError("LU requires a square matrix");
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = detail::magnitude(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double m = detail::magnitude(lu_(i, k));
        if (m > best) {
          best = m;
          piv = i;
        }
      }
      if (best == 0.0) throw SingularMatrixError("matrix is singular (zero pivot in column " + std::to_string(k + 1) + ")");
      if (piv != k) {
        std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(piv).begin());
        std::swap(perm_[k], perm_[piv]);
      }
      const T pivot = lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        if (detail::magnitude(lu_(i, k)) == 0.0) continue;
        const T l = lu_(i, k) / pivot;
        lu_(i, k) = l;
        auto ri = lu_.row(i);
        auto rk = lu_.row(k);
        for (std::size_t j = k + 1; j < n; ++j) ri[j] -= l * rk[j];
      }
    }
  }

  std::size_t size() const { return lu_.rows(); }

  std::vector<T> solve(std::span<const T> b) const {
    const std::size_t n = size();
    if (b.size() != n) throw DimensionError("LU solve: right-hand side has the wrong length");
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i) {
      T s = x[i];
      for (std::size_t j = 0; j < i; ++j) s -= lu_(i, j) * x[j];
      x[i] = s;
    }
    for (std::size_t i = n; i-- > 0;) {
      T s = x[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu_(i, j) * x[j];
      x[i] = s / lu_(i, i);
    }
    return x;
  }

  /// Solves A^T x = b.
  std::vector<T> solve_transpose(std::span<const T> b) const {
    const std::size_t n = size();
    std::vector<T> y(b.begin(), b.end());
    // U^T z = b
    for (std::size_t i = 0; i < n; ++i) {
      T s = y[i];
      for (std::size_t j = 0; j < i; ++j) s -= lu_(j, i) * y[j];
      y[i] = s / lu_(i, i);
    }
    // L^T w = z
    for (std::size_t i = n; i-- > 0;) {
      T s = y[i];
      for (std::size_t j = i + 1; j < n; ++j) s -= lu_(j, i) * y[j];
      y[i] = s;
    }
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = y[i];
    return x;
  }

private:
  DenseMatrix<T> lu_;
  std::vector<std::size_t> perm_;
};

/// Dense inverse in double, row-major.
inline DenseMatrix<double> dense_inverse(const SparseMatrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("inverse requires a square matrix");
  const std::size_t n = a.rows();
  const LuFactorization<double> lu(DenseMatrix<double>::from_sparse(a));
  DenseMatrix<double> inv(n, n);
  std::vector<double> e(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    e[j] = 1.0;
    const std::vector<double> col = lu.solve(e);
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    e[j] = 0.0;
  }
  return inv;
}

inline double norm_inf(const DenseMatrix<double>& a) {
  double mx = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::fabs(v);
    mx = std::max(mx, s);
  }
  return mx;
}

/// kappa_inf(A) = ||A^{-1}||_inf ||A||_inf via a dense inverse.
inline double kappa_inf(const SparseMatrix& a) { return norm_inf(dense_inverse(a)) * norm_inf(a); }

/// cond_2(A^T) = || |A^{-T}| |A^T| ||_2, estimated by power iteration on the
/// nonnegative matrix C^T C with C = |A^{-T}| |A^T|.
inline double cond2_transpose(const SparseMatrix& a, int max_iters = 500, double rel_tol = 1e-10) {
  const std::size_t n = a.rows();
  const DenseMatrix<double> inv = dense_inverse(a);  // A^{-1}; |A^{-T}| = |A^{-1}|^T
  const SparseMatrix at = a.transpose();
  auto apply_c = [&](const std::vector<double>& x) {
    // C x = |A^{-T}| (|A^T| x)
    std::vector<double> t(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cols = at.row_cols(i);
      const auto vals = at.row_values(i);
      for (std::size_t p = 0; p < cols.size(); ++p) t[i] += std::fabs(vals[p]) * x[cols[p]];
    }
    std::vector<double> y(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = inv.row(k);  // (A^{-T})_{ik} = (A^{-1})_{ki}
      const double tk = t[k];
      for (std::size_t i = 0; i < n; ++i) y[i] += std::fabs(r[i]) * tk;
    }
    return y;
  };
  auto apply_ct = [&](const std::vector<double>& x) {
    // C^T x = |A^T|^T (|A^{-T}|^T x) = |A| (|A^{-1}| x)
    std::vector<double> t(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto r = inv.row(k);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::fabs(r[i]) * x[i];
      t[k] = s;
    }
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cols = a.row_cols(i);
      const auto vals = a.row_values(i);
      for (std::size_t p = 0; p < cols.size(); ++p) y[i] += std::fabs(vals[p]) * t[cols[p]];
    }
    return y;
  };
  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double sigma = 0.0;
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> y = apply_ct(apply_c(x));
    const double nrm = norm2(y);
    if (nrm == 0.0) return 0.0;
    for (double& v : y) v /= nrm;
    const double next = std::sqrt(nrm);
    x = std::move(y);
    if (std::fabs(next - sigma) <= rel_tol * next) return next;
    sigma = next;
  }
  return sigma;
}

}  // namespace bspai
