#include "hsidl/error.hpp"
#include "hsidl/solvers.hpp"
#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace hsidl;
using hsidl::testing::random_matrix;
using hsidl::testing::random_unit_columns;

namespace {

// Minimum Lasso objective by enumerating every support and sign pattern. On
// a fixed support with fixed signs s the problem is smooth:
// y_S = (D_S^T D_S)^{-1} (D_S^T x - gamma s); keep it only if sign(y_S) == s.
double exhaustive_lasso(const Matrix& d, const Vector& x, double gamma) {
  const int k = static_cast<int>(d.cols());
  double best = 0.5 * x.squaredNorm();
  for (int mask = 1; mask < (1 << k); ++mask) {
    std::vector<int> support;
    for (int j = 0; j < k; ++j)
      if (mask & (1 << j)) support.push_back(j);
    const int s = static_cast<int>(support.size());
    Matrix ds(d.rows(), s);
    for (int i = 0; i < s; ++i) ds.col(i) = d.col(support[i]);
    const Matrix g = ds.transpose() * ds;
    const Vector c = ds.transpose() * x;
    for (int signs = 0; signs < (1 << s); ++signs) {
      Vector sv(s);
      for (int i = 0; i < s; ++i) sv(i) = (signs & (1 << i)) ? -1.0 : 1.0;
      const Vector y = g.ldlt().solve(c - gamma * sv);
      bool consistent = true;
      for (int i = 0; i < s; ++i) consistent = consistent && y(i) * sv(i) > 0.0;
      if (!consistent) continue;
      Vector full = Vector::Zero(k);
      for (int i = 0; i < s; ++i) full(support[i]) = y(i);
      best = std::min(best, 0.5 * (x - d * full).squaredNorm() + gamma * full.lpNorm<1>());
    }
  }
  return best;
}

bool non_increasing(const std::vector<double>& trace, double slack) {
  for (std::size_t i = 1; i < trace.size(); ++i)
    if (trace[i] > trace[i - 1] + slack) return false;
  return true;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

// Cross-solver comparisons need both sides converged; M-FOCUSS shrinks
// vanishing rows only linearly, so the default cap can stop it early.
SolverConfig converged_config() {
  SolverConfig cfg;
  cfg.max_iters = 5000;
  return cfg;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an hsidl::Error");
  return ErrorKind::Numerical;
}

}  // namespace

TEST_CASE("lasso on the identity is soft thresholding") {
  const Matrix d = Matrix::Identity(2, 2);
  const Vector x = (Vector(2) << 3.0, 0.5).finished();
  const auto r = lasso_cd({d, x, 1.0}, {});
  CHECK(r.code(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.code(1) == 0.0);
  CHECK(r.objective == doctest::Approx(0.5 * (1.0 + 0.25) + 2.0));
}

TEST_CASE("lasso returns zero above the threshold") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const Matrix d = random_unit_columns(6, 9, rng);
    const Vector x = random_matrix(6, 1, rng).col(0);
    const double gamma = (d.transpose() * x).cwiseAbs().maxCoeff();
    const auto r = lasso_cd({d, x, gamma}, {});
    CHECK(r.code.isZero(0.0));
  }
}

TEST_CASE("lasso matches the exhaustive support oracle") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Matrix d = random_unit_columns(8, 5, rng);
    const Vector x = random_matrix(8, 1, rng).col(0);
    const auto r = lasso_cd({d, x, 0.1}, {});
    CHECK(std::abs(r.objective - exhaustive_lasso(d, x, 0.1)) <= 1e-8);
  }
}

TEST_CASE("property: lasso KKT conditions hold") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 100; ++t) {
    const int b = 4 + static_cast<int>(rng() % 12), k = 2 + static_cast<int>(rng() % 20);
    const Matrix d = random_unit_columns(b, k, rng);
    const Vector x = random_matrix(b, 1, rng).col(0);
    const double gamma = 0.01 + 0.5 * static_cast<double>(rng() % 100) / 100.0;
    const bool nonneg = t % 2 == 1;
    SolverConfig cfg;
    const auto r = lasso_cd({d, x, gamma, nonneg}, cfg);
    CHECK(lasso_kkt_violation(d, x, r.code, gamma, nonneg) <= cfg.rel_tol);
    CHECK(r.objective == doctest::Approx(lasso_objective(d, x, r.code, gamma)).epsilon(1e-12));
    if (nonneg) CHECK(r.code.minCoeff() >= 0.0);
  }
}

TEST_CASE("lasso rejects mismatched dimensions") {
  const Matrix d = Matrix::Identity(3, 3);
  const Vector x = Vector::Ones(2);
  CHECK(kind_of([&] { lasso_cd({d, x, 1.0}, {}); }) == ErrorKind::DimensionMismatch);
  const Vector x3 = Vector::Ones(3);
  CHECK(kind_of([&] { lasso_cd({d, x3, 0.0}, {}); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("single-column MMV reduces to the Lasso") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const Matrix d = random_unit_columns(10, 7, rng);
    const Matrix x = random_matrix(10, 1, rng);
    const double gamma = 0.2;
    const auto lasso = lasso_cd({d, x.col(0), gamma}, {});
    const auto mf = mfocuss({d, x, gamma}, converged_config());
    const auto bcd = mmv_bcd({d, x, gamma}, converged_config());
    CHECK(rel_diff(mf.objective(), lasso.objective) <= 1e-4);
    CHECK(rel_diff(bcd.objective(), lasso.objective) <= 1e-4);
    CHECK(l21_norm(mf.codes) == doctest::Approx(mf.codes.col(0).lpNorm<1>()));
  }
}

TEST_CASE("large group weight zeroes the block") {
  std::mt19937_64 rng(6);
  const Matrix d = random_unit_columns(8, 6, rng);
  const Matrix x = random_matrix(8, 4, rng);
  const double max_corr = (d.transpose() * x).rowwise().norm().maxCoeff();
  const double gamma = 10.0 * max_corr;
  // zero is optimal iff ||d_j^T X||_2 <= gamma for every j
  CHECK(max_corr <= gamma);
  CHECK(mfocuss({d, x, gamma}, {}).codes.isZero(0.0));
  CHECK(mmv_bcd({d, x, gamma}, {}).codes.isZero(0.0));
}

TEST_CASE("identical columns on the identity dictionary") {
  const Matrix d = Matrix::Identity(3, 3);
  Matrix x = Matrix::Zero(3, 2);
  x(0, 0) = x(0, 1) = 5.0;
  const double gamma = 2.0;
  // minimize 1/2 * 2 (5 - y)^2 + gamma sqrt(2) |y|  ->  y = 5 - gamma / sqrt(2)
  const double expected = 5.0 - gamma / std::sqrt(2.0);
  for (const auto& r : {mfocuss({d, x, gamma}, {}), mmv_bcd({d, x, gamma}, {})}) {
    CHECK(r.codes.row(1).isZero(0.0));
    CHECK(r.codes.row(2).isZero(0.0));
    CHECK(r.codes(0, 0) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(r.codes(0, 0) == doctest::Approx(r.codes(0, 1)).epsilon(1e-12));
  }
}

TEST_CASE("BCD closed form for a single atom") {
  Matrix d(2, 1);
  d << 1.0, 0.0;
  Matrix x(2, 1);
  x << 4.0, 0.0;
  const auto r = mmv_bcd({d, x, 1.0}, {});
  CHECK(r.codes(0, 0) == doctest::Approx(3.0).epsilon(1e-12));

  Matrix zero_atom = Matrix::Zero(2, 2);
  zero_atom(0, 0) = 1.0;
  CHECK(kind_of([&] { mmv_bcd({zero_atom, x, 1.0}, {}); }) == ErrorKind::ZeroAtom);
}

TEST_CASE("M-FOCUSS initialization requirements") {
  const Matrix d = Matrix::Identity(3, 3);
  Matrix x = Matrix::Zero(3, 2);
  x(0, 0) = 1.0;
  Matrix init = Matrix::Ones(3, 2);
  init.row(2).setZero();
  CHECK(kind_of([&] { mfocuss({d, x, 0.1}, {}, &init); }) == ErrorKind::ZeroInitRow);
  // default start has zero rows in D^T X; must still run
  const auto r = mfocuss({d, x, 0.1}, {});
  CHECK(r.codes(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("M-FOCUSS and BCD agree on strongly convex instances") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 10; ++t) {
    const Matrix d = random_unit_columns(12, 8, rng);
    const Matrix x = random_matrix(12, 5, rng);
    const double gamma = 0.5;
    const auto a = mfocuss({d, x, gamma}, converged_config());
    const auto b = mmv_bcd({d, x, gamma}, converged_config());
    CHECK(rel_diff(a.objective(), b.objective()) <= 1e-6);
  }
}

TEST_CASE("property: MMV objective traces are non-increasing") {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 30; ++t) {
    const int b = 4 + static_cast<int>(rng() % 12), k = 2 + static_cast<int>(rng() % 24);
    const int g = 1 + static_cast<int>(rng() % 8);
    const Matrix d = random_unit_columns(b, k, rng);
    const Matrix x = random_matrix(b, g, rng);
    const double gamma = compute_gamma(0.05 + 0.1 * static_cast<double>(t % 5), static_cast<std::size_t>(g));
    const auto a = mfocuss({d, x, gamma}, {});
    const auto c = mmv_bcd({d, x, gamma}, {});
    CHECK(non_increasing(a.objective_trace, 1e-10));
    CHECK(non_increasing(c.objective_trace, 1e-10));
    CHECK(a.objective() == doctest::Approx(mmv_objective(d, x, a.codes, gamma)).epsilon(1e-12));
    // row sparsity: every column shares the support of unpruned rows
    for (Eigen::Index j = 0; j < a.codes.rows(); ++j) {
      const bool zero_row = a.codes.row(j).isZero(0.0);
      if (!zero_row) continue;
      CHECK(a.codes.row(j).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}

TEST_CASE("M-FOCUSS fixed points are stationary") {
  std::mt19937_64 rng(41);
  for (int t = 0; t < 10; ++t) {
    const Matrix d = random_unit_columns(10, 6, rng);
    const Matrix x = random_matrix(10, 4, rng);
    SolverConfig cfg;
    cfg.max_iters = 5000;
    const auto r = mfocuss({d, x, 0.3}, cfg);
    REQUIRE(r.converged);
    CHECK(mfocuss_stationarity(d, x, r.codes, 0.3) <= 1e-4);
  }
}

TEST_CASE("M-FOCUSS K x K and B x B forms agree") {
  std::mt19937_64 rng(51);
  // K < B takes the K x K path, K > B the B x B path; BCD is the reference.
  for (int t = 0; t < 5; ++t) {
    const Matrix narrow = random_unit_columns(12, 6, rng);
    const Matrix wide = random_unit_columns(6, 12, rng);
    const Matrix xn = random_matrix(12, 3, rng);
    const Matrix xw = random_matrix(6, 3, rng);
    const auto cfg = converged_config();
    CHECK(rel_diff(mfocuss({narrow, xn, 0.4}, cfg).objective(), mmv_bcd({narrow, xn, 0.4}, cfg).objective()) <= 1e-6);
    CHECK(rel_diff(mfocuss({wide, xw, 0.4}, cfg).objective(), mmv_bcd({wide, xw, 0.4}, cfg).objective()) <= 1e-6);
  }
}

TEST_CASE("code_groups over singletons matches per-pixel lasso") {
  std::mt19937_64 rng(61);
  const Matrix d = random_unit_columns(8, 10, rng);
  const Matrix x = random_matrix(8, 12, rng);
  const GroupPartition part = singleton_partition(3, 4);
  const RegSchedule schedule{0.1};
  const double gamma = schedule.gamma(1);
  CHECK(gamma == doctest::Approx(0.2));
  const Matrix y = code_groups_dense(d, x, part, schedule, converged_config(), MmvSolver::MFocuss);
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const auto lasso = lasso_cd({d, x.col(i), gamma}, {});
    CHECK(rel_diff(lasso_objective(d, x.col(i), y.col(i), gamma), lasso.objective) <= 1e-4);
  }
}

TEST_CASE("code_groups is independent of thread count") {
  std::mt19937_64 rng(71);
  const Matrix d = random_unit_columns(16, 24, rng);
  const Matrix x = random_matrix(16, 20 * 20, rng);
  const GroupPartition part = partition_into_patches(20, 20, 3);
  for (const auto solver : {MmvSolver::MFocuss, MmvSolver::Bcd}) {
    CodingOptions one, four;
    four.threads = 4;
    const CodeMatrix a = code_groups(d, x, part, {0.2}, {}, solver, one);
    const CodeMatrix b = code_groups(d, x, part, {0.2}, {}, solver, four);
    CHECK(a == b);
  }
}

TEST_CASE("code_groups on an empty partition") {
  const Matrix d = Matrix::Identity(3, 3);
  const Matrix x(3, 0);
  GroupPartition empty;
  const CodeMatrix y = code_groups(d, x, empty, {}, {}, MmvSolver::MFocuss);
  CHECK(y.nnz() == 0);
  CHECK(y.n_samples() == 0);
}
