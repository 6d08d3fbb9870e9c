#include "hsidl/solvers.hpp"

#include "hsidl/error.hpp"
#include "hsidl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hsidl {

double compute_gamma(double sigma2, std::size_t group_size) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw Error(ErrorKind::InvalidArgument, "sigma2 must be positive");
  }
  if (group_size == 0) throw Error(ErrorKind::InvalidArgument, "group size must be at least 1");
  const double q = static_cast<double>(group_size);
  const double lambda = std::sqrt(q);
  return sigma2 * lambda * (1.0 / q + 1.0);
}

void SolverConfig::validate() const {
  if (max_iters < 1 || lasso_max_sweeps < 1) {
    throw Error(ErrorKind::InvalidArgument, "iteration caps must be at least 1");
  }
  if (!(rel_tol > 0.0) || !(prune_tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "solver tolerances must be positive");
  }
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::InvalidArgument, "regularization weight must be positive and finite");
  }
}

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Max KKT violation of a Lasso iterate given q = D^T (x - D y).
double kkt_violation(const Vector& q, const Vector& y, double gamma, bool nonneg) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    double v;
    if (y[j] > 0.0) {
      v = std::abs(q[j] - gamma);
    } else if (y[j] < 0.0) {
      v = std::abs(q[j] + gamma);
    } else {
      v = std::max(0.0, (nonneg ? q[j] : std::abs(q[j])) - gamma);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

Matrix gram_of(const Matrix& dictionary) { return dictionary.transpose() * dictionary; }

void check_mmv(const MmvProblem& problem) {
  if (problem.signals.rows() != problem.dictionary.rows()) {
    throw Error(ErrorKind::DimensionMismatch,
                "signal block has " + std::to_string(problem.signals.rows()) + " bands, dictionary has " +
                    std::to_string(problem.dictionary.rows()));
  }
  if (problem.signals.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "empty signal block");
  if (problem.gram && (problem.gram->rows() != problem.dictionary.cols() ||
                       problem.gram->cols() != problem.dictionary.cols())) {
    throw Error(ErrorKind::DimensionMismatch, "gram matrix does not match the dictionary");
  }
  check_gamma(problem.gamma);
}

void check_init(const Matrix& init, Eigen::Index atoms, Eigen::Index cols) {
  if (init.rows() != atoms || init.cols() != cols) {
    throw Error(ErrorKind::DimensionMismatch, "initial code block has the wrong shape");
  }
}

// Zeroes rows that are negligible relative to the largest row, then any row
// for which zero is the exact row-wise minimizer given the others
// (||d_j^T R_j|| <= gamma). Both steps are sequential over rows and each
// zeroing is a row-wise descent step. Returns true if Y changed.
bool prune_rows(Matrix& codes, const Matrix& gram, const Matrix& dtx, double gamma, double prune_tol) {
  const Vector norms = codes.rowwise().norm();
  const double largest = norms.size() ? norms.maxCoeff() : 0.0;
  bool changed = false;
  for (Eigen::Index j = 0; j < codes.rows(); ++j) {
    if (norms[j] != 0.0 && norms[j] < prune_tol * largest) {
      codes.row(j).setZero();
      changed = true;
    }
  }
  Matrix q = dtx - gram * codes;
  for (Eigen::Index j = 0; j < codes.rows(); ++j) {
    if (codes.row(j).squaredNorm() == 0.0) continue;
    const Eigen::RowVectorXd z = q.row(j) + gram(j, j) * codes.row(j);
    if (z.norm() <= gamma) {
      q.noalias() += gram.col(j) * codes.row(j);
      codes.row(j).setZero();
      changed = true;
    }
  }
  return changed;
}

Matrix gather_columns(const Matrix& source, const std::vector<std::size_t>& columns) {
  Matrix out(source.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = source.col(static_cast<Eigen::Index>(columns[j]));
  }
  return out;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::Numerical, std::string(what) + " produced non-finite values");
}


constexpr int kPolishEvery = 25;

// Solves the smooth problem on the current support with the current signs.
// Replaces y only when the result keeps those signs and meets the full
// optimality conditions.
bool polish_support(const Matrix& G, const Vector& c, double gamma, bool nonneg, double tol, Vector& y) {
  std::vector<Eigen::Index> support;
  for (Eigen::Index j = 0; j < y.size(); ++j)
    if (y[j] != 0.0) support.push_back(j);
  if (support.empty()) return false;
  const auto s = static_cast<Eigen::Index>(support.size());
  Matrix gs(s, s);
  Vector rhs(s);
  for (Eigen::Index a = 0; a < s; ++a) {
    rhs[a] = c[support[a]] - gamma * (y[support[a]] > 0.0 ? 1.0 : -1.0);
    for (Eigen::Index b = 0; b < s; ++b) gs(a, b) = G(support[a], support[b]);
  }
  const Eigen::LLT<Matrix> llt(gs);
  if (llt.info() != Eigen::Success) return false;
  const Vector ys = llt.solve(rhs);
  if (!ys.allFinite()) return false;
  Vector candidate = Vector::Zero(y.size());
  for (Eigen::Index a = 0; a < s; ++a) {
    if (ys[a] * y[support[a]] <= 0.0) return false;
    candidate[support[a]] = ys[a];
  }
  const Vector q = c - G * candidate;
  if (kkt_violation(q, candidate, gamma, nonneg) > tol) return false;
  y = std::move(candidate);
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Lasso

double lasso_objective(const Matrix& dictionary, const Vector& signal, const Vector& code, double gamma) {
  return 0.5 * (signal - dictionary * code).squaredNorm() + gamma * code.lpNorm<1>();
}

double lasso_kkt_violation(const Matrix& dictionary, const Vector& signal, const Vector& code,
                           double gamma, bool nonneg) {
  const Vector q = dictionary.transpose() * (signal - dictionary * code);
  return kkt_violation(q, code, gamma, nonneg) / gamma;
}

LassoResult lasso_cd(const LassoProblem& problem, const SolverConfig& config, const Vector* warm) {
  config.validate();
  check_gamma(problem.gamma);
  const Matrix& D = problem.dictionary;
  if (problem.signal.size() != D.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "signal length does not match the dictionary");
  }
  const Eigen::Index K = D.cols();
  Matrix owned_gram;
  if (!problem.gram) owned_gram = gram_of(D);
  const Matrix& G = problem.gram ? *problem.gram : owned_gram;
  if (G.rows() != K || G.cols() != K) {
    throw Error(ErrorKind::DimensionMismatch, "gram matrix does not match the dictionary");
  }
  const double gamma = problem.gamma;

  const Vector c = D.transpose() * problem.signal;
  Vector y = Vector::Zero(K);
  if (warm) {
    if (warm->size() != K) throw Error(ErrorKind::DimensionMismatch, "warm start has the wrong length");
    y = *warm;
    if (problem.nonneg) y = y.cwiseMax(0.0);
  }
  Vector q = c - G * y;

  LassoResult result;
  const double tol = config.rel_tol * gamma;
  for (int sweep = 1; sweep <= config.lasso_max_sweeps; ++sweep) {
    for (Eigen::Index j = 0; j < K; ++j) {
      const double gjj = G(j, j);
      if (gjj <= 0.0) continue;
      const double z = q[j] + gjj * y[j];
      const double next = problem.nonneg ? std::max(z - gamma, 0.0) / gjj : soft_threshold(z, gamma) / gjj;
      const double delta = next - y[j];
      if (delta != 0.0) {
        q.noalias() -= G.col(j) * delta;
        y[j] = next;
      }
    }
    result.sweeps = sweep;
    if (sweep % kPolishEvery == 0 && polish_support(G, c, gamma, problem.nonneg, tol, y)) {
      q = c - G * y;
      result.converged = true;
      break;
    }
    if (kkt_violation(q, y, gamma, problem.nonneg) <= tol) {
      // refresh the running gradient before accepting
      q = c - G * y;
      if (kkt_violation(q, y, gamma, problem.nonneg) <= tol) {
        result.converged = true;
        break;
      }
    }
  }
  require_finite(y, "lasso_cd");
  result.objective = lasso_objective(D, problem.signal, y, gamma);
  result.code = std::move(y);
  return result;
}

// ---------------------------------------------------------------------------
// MMV

double l21_norm(const Matrix& codes) { return codes.rowwise().norm().sum(); }

double mmv_objective(const Matrix& dictionary, const Matrix& signals, const Matrix& codes, double gamma) {
  return 0.5 * (signals - dictionary * codes).squaredNorm() + gamma * l21_norm(codes);
}

MmvResult mfocuss(const MmvProblem& problem, const SolverConfig& config, const Matrix* init) {
  config.validate();
  check_mmv(problem);
  const Matrix& D = problem.dictionary;
  const Matrix X = problem.signals;
  const Eigen::Index B = D.rows();
  const Eigen::Index K = D.cols();
  const double gamma = problem.gamma;

  Matrix owned_gram;
  if (!problem.gram) owned_gram = gram_of(D);
  const Matrix& G = problem.gram ? *problem.gram : owned_gram;
  const Matrix dtx = D.transpose() * X;

  Matrix Y;
  if (init) {
    check_init(*init, K, X.cols());
    Y = *init;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (Y.row(j).squaredNorm() == 0.0) {
        throw Error(ErrorKind::ZeroInitRow, "initial row " + std::to_string(j) + " is zero",
                    static_cast<std::size_t>(j));
      }
    }
  } else {
    Y = dtx;
    for (Eigen::Index j = 0; j < K; ++j) {
      if (Y.row(j).squaredNorm() == 0.0) Y.row(j).array() += 1e-12;
    }
  }

  MmvResult result;
  result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
  const bool atom_space = K <= B;

  for (int it = 1; it <= config.max_iters; ++it) {
    const Vector rho = Y.rowwise().norm();
    Matrix next;
    if (atom_space) {
      // Lambda^{1/2} (Lambda^{1/2} G Lambda^{1/2} + gamma I)^{-1} Lambda^{1/2} D^T X
      const Vector s = rho.cwiseSqrt();
      Matrix system = s.asDiagonal() * G * s.asDiagonal();
      system.diagonal().array() += gamma;
      const Eigen::LLT<Matrix> llt(system);
      if (llt.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "M-FOCUSS factorization failed");
      next = s.asDiagonal() * llt.solve(s.asDiagonal() * dtx);
    } else {
      Matrix system = D * rho.asDiagonal() * D.transpose();
      system.diagonal().array() += gamma;
      const Eigen::LLT<Matrix> llt(system);
      if (llt.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "M-FOCUSS factorization failed");
      next = rho.asDiagonal() * (D.transpose() * llt.solve(X));
    }
    require_finite(next, "mfocuss");
    const double change = (next - Y).norm() / std::max(1.0, Y.norm());
    Y = std::move(next);
    result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
    result.iterations = it;
    if (change < config.rel_tol) {
      result.converged = true;
      break;
    }
  }

  if (prune_rows(Y, G, dtx, gamma, config.prune_tol)) {
    result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
  }
  result.codes = std::move(Y);
  return result;
}

MmvResult mmv_bcd(const MmvProblem& problem, const SolverConfig& config, const Matrix* init) {
  config.validate();
  check_mmv(problem);
  const Matrix& D = problem.dictionary;
  const Matrix X = problem.signals;
  const Eigen::Index K = D.cols();
  const double gamma = problem.gamma;

  Matrix owned_gram;
  if (!problem.gram) owned_gram = gram_of(D);
  const Matrix& G = problem.gram ? *problem.gram : owned_gram;
  for (Eigen::Index j = 0; j < K; ++j) {
    if (G(j, j) <= 0.0) {
      throw Error(ErrorKind::ZeroAtom, "atom " + std::to_string(j) + " has zero norm",
                  static_cast<std::size_t>(j));
    }
  }
  const Matrix dtx = D.transpose() * X;

  Matrix Y = Matrix::Zero(K, X.cols());
  if (init) {
    check_init(*init, K, X.cols());
    Y = *init;
  }

  MmvResult result;
  result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
  Eigen::RowVectorXd z(X.cols());
  for (int sweep = 1; sweep <= config.max_iters; ++sweep) {
    const Matrix before = Y;
    Matrix q = dtx - G * Y;  // D^T (X - D Y), refreshed once per sweep
    for (Eigen::Index j = 0; j < K; ++j) {
      const double gjj = G(j, j);
      z = q.row(j) + gjj * Y.row(j);
      const double zn = z.norm();
      const double scale = zn > gamma ? (1.0 - gamma / zn) / gjj : 0.0;
      const Eigen::RowVectorXd delta = scale * z - Y.row(j);
      if (delta.squaredNorm() != 0.0) {
        q.noalias() -= G.col(j) * delta;
        Y.row(j) += delta;
      }
    }
    require_finite(Y, "mmv_bcd");
    const double change = (Y - before).norm() / std::max(1.0, before.norm());
    result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
    result.iterations = sweep;
    if (change < config.rel_tol) {
      result.converged = true;
      break;
    }
  }

  if (prune_rows(Y, G, dtx, gamma, config.prune_tol)) {
    result.objective_trace.push_back(mmv_objective(D, X, Y, gamma));
  }
  result.codes = std::move(Y);
  return result;
}

double mfocuss_stationarity(const Matrix& dictionary, const Matrix& signals, const Matrix& codes,
                            double gamma) {
  const Vector rho = codes.rowwise().norm();
  Matrix residual = rho.asDiagonal() * (dictionary.transpose() * (dictionary * codes - signals)) + gamma * codes;
  for (Eigen::Index j = 0; j < codes.rows(); ++j) {
    if (rho[j] == 0.0) residual.row(j).setZero();
  }
  return residual.norm() / std::max(1.0, codes.norm());
}

// ---------------------------------------------------------------------------
// batch coding

Matrix code_groups_dense(const Matrix& dictionary, const Matrix& signals,
                         const GroupPartition& partition, const RegSchedule& schedule,
                         const SolverConfig& config, MmvSolver solver, const CodingOptions& options) {
  config.validate();
  const Eigen::Index K = dictionary.cols();
  if (signals.rows() != dictionary.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "signals and dictionary disagree on band count");
  }
  if (static_cast<std::size_t>(signals.cols()) != partition.pixel_count()) {
    throw Error(ErrorKind::DimensionMismatch, "signal count does not match the partition");
  }
  if (options.previous && (options.previous->rows() != K || options.previous->cols() != signals.cols())) {
    throw Error(ErrorKind::DimensionMismatch, "previous codes have the wrong shape");
  }

  const Matrix gram = gram_of(dictionary);
  Matrix codes = Matrix::Zero(K, signals.cols());

  parallel_for(partition.groups.size(), options.threads, [&](std::size_t g) {
    const auto& members = partition.groups[g];
    if (members.empty()) return;
    const Matrix block = gather_columns(signals, members);
    const double gamma = schedule.gamma(members.size());
    const MmvProblem problem{dictionary, block, gamma, &gram};

    Matrix previous;
    if (options.previous) previous = gather_columns(*options.previous, members);

    MmvResult solved = solver == MmvSolver::MFocuss
                           ? mfocuss(problem, config)
                           : mmv_bcd(problem, config, options.previous ? &previous : nullptr);
    const Matrix* chosen = &solved.codes;
    if (options.previous && mmv_objective(dictionary, block, previous, gamma) < solved.objective()) {
      chosen = &previous;
    }
    for (std::size_t j = 0; j < members.size(); ++j) {
      codes.col(static_cast<Eigen::Index>(members[j])) = chosen->col(static_cast<Eigen::Index>(j));
    }
  });
  return codes;
}

CodeMatrix code_groups(const Matrix& dictionary, const Matrix& signals, const GroupPartition& partition,
                       const RegSchedule& schedule, const SolverConfig& config, MmvSolver solver,
                       const CodingOptions& options) {
  return CodeMatrix::from_dense(
      code_groups_dense(dictionary, signals, partition, schedule, config, solver, options));
}

Matrix code_samples_dense(const Matrix& dictionary, const Matrix& signals, double gamma, bool nonneg,
                          const SolverConfig& config, const CodingOptions& options) {
  config.validate();
  check_gamma(gamma);
  if (signals.rows() != dictionary.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "signals and dictionary disagree on band count");
  }
  const Eigen::Index K = dictionary.cols();
  if (options.previous && (options.previous->rows() != K || options.previous->cols() != signals.cols())) {
    throw Error(ErrorKind::DimensionMismatch, "previous codes have the wrong shape");
  }
  const Matrix gram = gram_of(dictionary);
  Matrix codes = Matrix::Zero(K, signals.cols());
  parallel_for(static_cast<std::size_t>(signals.cols()), options.threads, [&](std::size_t n) {
    const auto col = static_cast<Eigen::Index>(n);
    const LassoProblem problem{dictionary, signals.col(col), gamma, nonneg, &gram};
    Vector warm;
    if (options.previous) warm = options.previous->col(col);
    codes.col(col) = lasso_cd(problem, config, options.previous ? &warm : nullptr).code;
  });
  return codes;
}

}  // namespace hsidl
