#pragma once

// Deterministic desk-scale test matrices. They stand in for the SuiteSparse
// corpus when it is not available and cover the same regimes: nonsymmetric
// convection-diffusion stencils, graded rows with entries spread over many
// orders of magnitude (so every bucket gets populated), and small random
// diagonally dominant systems.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bspai/sparse_matrix.hpp"

namespace bspai::synthetic {

/// Upwinded 5-point convection-diffusion operator on an nx-by-ny grid.
inline SparseMatrix convection_diffusion(Index nx, Index ny, double peclet) {
  std::vector<Triplet> t;
  const double h = 1.0 / static_cast<double>(nx + 1);
  const double conv = peclet * h;
  auto id = [nx](Index i, Index j) { return j * nx + i; };
  for (Index j = 0; j < ny; ++j) {
    for (Index i = 0; i < nx; ++i) {
      const Index r = id(i, j);
      t.push_back({r, r, 4.0 + conv});
      if (i > 0) t.push_back({r, id(i - 1, j), -1.0 - conv});
      if (i + 1 < nx) t.push_back({r, id(i + 1, j), -1.0});
      if (j > 0) t.push_back({r, id(i, j - 1), -1.0});
      if (j + 1 < ny) t.push_back({r, id(i, j + 1), -1.0});
    }
  }
  return SparseMatrix::from_triplets(nx * ny, nx * ny, std::move(t));
}

/// Random sparse matrix with `per_row` off-diagonals per row whose magnitudes
/// are log-uniform over `decades` orders of magnitude, plus a dominant
/// diagonal of size `diag_weight` times the row sum.
inline SparseMatrix graded_random(Index n, Index per_row, double decades, double diag_weight, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> col(0, n - 1);
  std::uniform_real_distribution<double> expo(-decades, 0.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    std::vector<Index> used{i};
    double rowsum = 0.0;
    for (Index k = 0; k < per_row && used.size() < n; ++k) {
      Index j = col(rng);
      while (std::find(used.begin(), used.end(), j) != used.end()) j = col(rng);
      used.push_back(j);
      const double v = (sign(rng) ? 1.0 : -1.0) * std::pow(10.0, expo(rng));
      rowsum += std::fabs(v);
      t.push_back({i, j, v});
    }
    t.push_back({i, i, diag_weight * std::max(rowsum, 1.0)});
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

/// Row i scaled by 10^(decades * i / (n-1)): a well-structured matrix whose
/// condition number grows with `decades`.
inline SparseMatrix row_graded(const SparseMatrix& a, double decades) {
  std::vector<Triplet> t = a.triplets();
  const double denom = a.rows() > 1 ? static_cast<double>(a.rows() - 1) : 1.0;
  for (Triplet& e : t) e.value *= std::pow(10.0, decades * static_cast<double>(e.row) / denom);
  return SparseMatrix::from_triplets(a.rows(), a.cols(), std::move(t));
}

/// Random sparse matrix with a random (not necessarily dominant) diagonal
/// and entries of mixed magnitude; nonsingular with probability one.
inline SparseMatrix random_sparse(Index n, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<Triplet> t;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) {
        t.push_back({i, j, 2.0 + uni(rng)});
      } else if (coin(rng) < density) {
        t.push_back({i, j, uni(rng)});
      }
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

struct NamedMatrix {
  std::string name;
  SparseMatrix a;
};

/// The fixed synthetic suite used by the verification commands and the
/// acceptance tests.
inline std::vector<NamedMatrix> standard_suite() {
  std::vector<NamedMatrix> s;
  s.push_back({"cd_8x8_pe10", convection_diffusion(8, 8, 10.0)});
  s.push_back({"cd_12x10_pe50", convection_diffusion(12, 10, 50.0)});
  s.push_back({"graded_60", graded_random(60, 6, 8.0, 1.5, 7)});
  s.push_back({"graded_120", graded_random(120, 8, 12.0, 1.2, 11)});
  s.push_back({"rowgraded_cd_6x6", row_graded(convection_diffusion(6, 6, 5.0), 6.0)});
  s.push_back({"random_40", random_sparse(40, 0.12, 3)});
  return s;
}

}  // namespace bspai::synthetic
