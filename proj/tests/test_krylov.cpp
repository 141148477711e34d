#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>
#include <random>

#include "bspai/krylov.hpp"
#include "bspai/spai.hpp"
#include "bspai/synthetic.hpp"
#include "bspai/verify.hpp"

using namespace bspai;

namespace {

struct RefResult {
  Vector d;
  std::size_t iterations = 0;
};

// Textbook left-preconditioned MGS-GMRES with Givens rotations in native
// double, written against dense row-major operators.
RefResult reference_gmres(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& m,
                          const Vector& r, double tol) {
  const std::size_t n = r.size();
  auto matvec = [n](const std::vector<std::vector<double>>& op, const Vector& x) {
    Vector y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (op[i][j] != 0.0) s = s + op[i][j] * x[j];
      }
      y[i] = s;
    }
    return y;
  };
  auto dot = [](const Vector& x, const Vector& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s = s + x[i] * y[i];
    return s;
  };
  const Vector s0 = matvec(m, r);
  const double beta = std::sqrt(dot(s0, s0));
  std::vector<Vector> v{Vector(n)};
  for (std::size_t i = 0; i < n; ++i) v[0][i] = s0[i] / beta;
  std::vector<Vector> h;
  Vector cs, sn, g{beta};
  std::size_t k = 0;
  for (std::size_t j = 0; j < n; ++j) {
    Vector z = matvec(m, matvec(a, v[j]));
    Vector col(j + 2, 0.0);
    for (std::size_t i = 0; i <= j; ++i) {
      col[i] = dot(v[i], z);
      for (std::size_t l = 0; l < n; ++l) z[l] = z[l] - col[i] * v[i][l];
    }
    const double hn = std::sqrt(dot(z, z));
    col[j + 1] = hn;
    for (std::size_t i = 0; i < j; ++i) {
      const double t = cs[i] * col[i] + sn[i] * col[i + 1];
      col[i + 1] = cs[i] * col[i + 1] - sn[i] * col[i];
      col[i] = t;
    }
    const double den = std::sqrt(col[j] * col[j] + hn * hn);
    cs.push_back(col[j] / den);
    sn.push_back(hn / den);
    col[j] = den;
    g.push_back(-sn[j] * g[j]);
    g[j] = cs[j] * g[j];
    h.push_back(col);
    k = j + 1;
    if (hn == 0.0 || std::fabs(g[j + 1]) / beta <= tol) break;
    v.emplace_back(n);
    for (std::size_t l = 0; l < n; ++l) v[j + 1][l] = z[l] / hn;
  }
  Vector y(k);
  for (std::size_t i = k; i-- > 0;) {
    double t = g[i];
    for (std::size_t c = i + 1; c < k; ++c) t = t - h[c][i] * y[c];
    y[i] = t / h[i][i];
  }
  RefResult out{Vector(n, 0.0), k};
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t l = 0; l < n; ++l) out.d[l] = out.d[l] + y[i] * v[i][l];
  }
  return out;
}

std::vector<std::vector<double>> dense(const SparseMatrix& a) {
  std::vector<std::vector<double>> d(a.rows(), std::vector<double>(a.cols(), 0.0));
  for (const Triplet& t : a.triplets()) d[t.row][t.col] = t.value;
  return d;
}

SparseMatrix spai_of(const SparseMatrix& a, double eps) {
  SpaiConfig cfg;
  cfg.eps_tol = eps;
  return spai_right_preconditioner(a, cfg).m;
}

}  // namespace

TEST(Gmres, IdentitySystemConvergesInOneIteration) {
  const SparseMatrix i = SparseMatrix::identity(5);
  const BucketedMatrix m = build_buckets(i, BucketScheme::uniform(kDouble));
  const Vector r{1.0, 2.0, 3.0, 4.0, 5.0};
  const GmresResult g = gmres_left(i, m, r, {});
  EXPECT_TRUE(g.converged);
  EXPECT_EQ(g.iterations, 1u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(g.solution[k], r[k], 1e-15);
}

TEST(Gmres, ExactInversePreconditionerNeedsOneIteration) {
  const std::vector<double> d{2.0, 4.0, 8.0, 0.5};
  const std::vector<double> inv{0.5, 0.25, 0.125, 2.0};
  const SparseMatrix a = SparseMatrix::diagonal(d);
  const BucketedMatrix m = build_buckets(SparseMatrix::diagonal(inv), BucketScheme::uniform(kDouble));
  const Vector r{2.0, 4.0, 8.0, 0.5};
  const GmresResult g = gmres_left(a, m, r, {});
  EXPECT_TRUE(g.converged);
  EXPECT_LE(g.iterations, 2u);
  for (double v : g.solution) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Gmres, ZeroRightHandSideIsAlreadySolved) {
  const SparseMatrix a = SparseMatrix::identity(3);
  const GmresResult g = gmres_left(a, build_buckets(a, BucketScheme::uniform(kDouble)), Vector(3, 0.0), {});
  EXPECT_TRUE(g.converged);
  EXPECT_EQ(g.iterations, 0u);
  EXPECT_EQ(g.solution, Vector(3, 0.0));
}

TEST(Gmres, DoublePrecisionRunIsBitIdenticalToReference) {
  for (const auto& nm : synthetic::standard_suite()) {
    const SparseMatrix m = spai_of(nm.a, 0.4);
    std::mt19937_64 rng(5);
    const Vector r = random_unit_vector(nm.a.rows(), rng);
    GmresConfig cfg;
    cfg.tol = 1e-10;
    const GmresResult g = gmres_left(nm.a, build_buckets(m, BucketScheme::uniform(kDouble)), r, cfg);
    const RefResult ref = reference_gmres(dense(nm.a), dense(m), r, 1e-10);
    ASSERT_EQ(g.iterations, ref.iterations) << nm.name;
    for (std::size_t i = 0; i < r.size(); ++i) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(g.solution[i]), std::bit_cast<std::uint64_t>(ref.d[i])) << nm.name;
    }
  }
}

TEST(Gmres, ArnoldiEstimateTracksTrueResidual) {
  for (const auto& nm : synthetic::standard_suite()) {
    const SparseMatrix m = spai_of(nm.a, 0.3);
    const Vector r = Vector(nm.a.rows(), 1.0);
    const GmresResult g = gmres_left(nm.a, build_buckets(m, BucketScheme::uniform(kDouble)), r, {});
    ASSERT_TRUE(g.converged) << nm.name;
    Vector res(r.size());
    const Vector ad = spmv_uniform(nm.a, g.solution, kDouble);
    for (std::size_t i = 0; i < r.size(); ++i) res[i] = r[i] - ad[i];
    const double true_rel = norm2(spmv_uniform(m, res, kDouble)) / norm2(spmv_uniform(m, r, kDouble));
    EXPECT_NEAR(true_rel, g.residual_history.back(), 1e-6) << nm.name;
    EXPECT_LE(g.residual_history.back(), 1e-8);
    for (std::size_t k = 1; k < g.residual_history.size(); ++k) {
      EXPECT_LE(g.residual_history[k], g.residual_history[k - 1] * (1 + 1e-12));
    }
    EXPECT_EQ(g.residual_history.size(), g.iterations + 1);
  }
}

TEST(Gmres, SinglePrecisionReachesLooseTolerance) {
  const SparseMatrix a = synthetic::convection_diffusion(8, 8, 10.0);
  const SparseMatrix m = spai_of(a, 0.3);
  GmresConfig cfg;
  cfg.tol = 1e-4;
  cfg.fmt_work = kSingle;
  cfg.fmt_matvec = kSingle;
  const GmresResult g = gmres_left(a, build_buckets(m, BucketScheme::uniform(kSingle)), Vector(64, 0.125), cfg);
  EXPECT_TRUE(g.converged);
  for (double v : g.solution) EXPECT_EQ(v, round_to(v, kSingle));
}

TEST(Gmres, IterationCapIsReported) {
  const SparseMatrix a = synthetic::convection_diffusion(10, 10, 40.0);
  const BucketedMatrix m = build_buckets(SparseMatrix::identity(100), BucketScheme::uniform(kDouble));
  GmresConfig cfg;
  cfg.max_iters = 3;
  const GmresResult g = gmres_left(a, m, Vector(100, 0.1), cfg);
  EXPECT_FALSE(g.converged);
  EXPECT_EQ(g.iterations, 3u);
}

TEST(Gmres, NonFiniteValuesRaiseWithIteration) {
  const SparseMatrix a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, std::numeric_limits<double>::infinity()}});
  const BucketedMatrix m = build_buckets(SparseMatrix::identity(2), BucketScheme::uniform(kDouble));
  try {
    gmres_left(a, m, Vector{1.0, 1.0}, {});
    FAIL() << "expected GmresError";
  } catch (const GmresError& e) {
    EXPECT_EQ(e.iteration(), 1u);
  }
  const SparseMatrix i = SparseMatrix::identity(2);
  const Vector bad{std::numeric_limits<double>::quiet_NaN(), 1.0};
  EXPECT_THROW(gmres_left(i, m, bad, {}), GmresError);
}

TEST(Gmres, RejectsBadConfiguration) {
  const SparseMatrix i = SparseMatrix::identity(2);
  const BucketedMatrix m = build_buckets(i, BucketScheme::uniform(kDouble));
  GmresConfig cfg;
  cfg.tol = 1.5;
  EXPECT_THROW(gmres_left(i, m, Vector{1.0, 1.0}, cfg), Error);
  EXPECT_THROW(gmres_left(i, m, Vector{1.0}, {}), DimensionError);
}
