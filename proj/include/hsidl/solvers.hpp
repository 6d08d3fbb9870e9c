#pragma once

#include "hsidl/context.hpp"
#include "hsidl/regularization.hpp"
#include "hsidl/types.hpp"

#include <vector>

namespace hsidl {

struct SolverConfig {
  // Iteration cap for M-FOCUSS iterations / BCD row sweeps.
  int max_iters = 200;
  // Stop when ||Y_new - Y_old||_F / max(1, ||Y_old||_F) < rel_tol. For the
  // Lasso this is the KKT tolerance relative to gamma.
  double rel_tol = 1e-6;
  // Rows whose l2 norm is below prune_tol * (largest row norm) are zeroed.
  double prune_tol = 1e-8;
  // Coordinate-descent sweep cap for the Lasso; coherent dictionaries need
  // far more sweeps than M-FOCUSS needs iterations.
  int lasso_max_sweeps = 20000;

  void validate() const;
};

/// min_y 1/2 ||x - D y||^2 + gamma ||y||_1, optionally with y >= 0.
struct LassoProblem {
  const Matrix& dictionary;
  Eigen::Ref<const Vector> signal;
  double gamma = 0.0;
  bool nonneg = false;
  // Optional precomputed D^T D.
  const Matrix* gram = nullptr;
};

struct LassoResult {
  Vector code;
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
};

/// Cyclic coordinate descent with covariance updates; coordinates visited in
/// index order. Terminates once the subgradient conditions hold to
/// rel_tol * gamma. `warm` seeds the iterate (clamped at zero when nonneg).
LassoResult lasso_cd(const LassoProblem& problem, const SolverConfig& config,
                     const Vector* warm = nullptr);

double lasso_objective(const Matrix& dictionary, const Vector& signal, const Vector& code, double gamma);

/// Largest violation of the Lasso optimality conditions, divided by gamma.
double lasso_kkt_violation(const Matrix& dictionary, const Vector& signal, const Vector& code,
                           double gamma, bool nonneg);

/// min_Y 1/2 ||X_G - D Y||_F^2 + gamma ||Y||_{2,1}.
struct MmvProblem {
  const Matrix& dictionary;
  Eigen::Ref<const Matrix> signals;  // B x |G|
  double gamma = 0.0;
  const Matrix* gram = nullptr;
};

struct MmvResult {
  Matrix codes;  // K x |G|, row-sparse
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;

  double objective() const { return objective_trace.back(); }
};

double mmv_objective(const Matrix& dictionary, const Matrix& signals, const Matrix& codes, double gamma);

/// Sum of row l2 norms.
double l21_norm(const Matrix& codes);

/// Regularized M-FOCUSS: Y <- Lambda D^T (D Lambda D^T + gamma I)^{-1} X with
/// Lambda = diag(row norms of the previous Y). The solve runs in the smaller
/// of the B x B and the equivalent K x K forms. Default start is D^T X with
/// exactly-zero rows nudged to 1e-12. The trace holds the objective at the
/// start and after every iteration, plus one entry after pruning if pruning
/// changed Y.
MmvResult mfocuss(const MmvProblem& problem, const SolverConfig& config,
                  const Matrix* init = nullptr);

/// Row-wise block coordinate descent with the group soft-threshold update.
/// Starts from `init` or from zero; one trace entry per full sweep.
MmvResult mmv_bcd(const MmvProblem& problem, const SolverConfig& config,
                  const Matrix* init = nullptr);

/// Norm of Lambda D^T (D Y - X) + gamma Y over unpruned rows, relative to
/// max(1, ||Y||_F). Zero at an M-FOCUSS fixed point.
double mfocuss_stationarity(const Matrix& dictionary, const Matrix& signals, const Matrix& codes,
                            double gamma);

enum class MmvSolver { MFocuss, Bcd };

struct CodingOptions {
  unsigned threads = 1;
  // Previous codes (K x N). BCD warm-starts from them; for either solver a
  // group keeps its previous block when that block scores a lower
  // objective than the fresh solve.
  const Matrix* previous = nullptr;
};

/// Solves every group of the partition independently. X holds one column
/// per pixel index of the partition. Each group writes only its own
/// columns, so the result does not depend on the thread count.
Matrix code_groups_dense(const Matrix& dictionary, const Matrix& signals,
                         const GroupPartition& partition, const RegSchedule& schedule,
                         const SolverConfig& config, MmvSolver solver,
                         const CodingOptions& options = {});

CodeMatrix code_groups(const Matrix& dictionary, const Matrix& signals,
                       const GroupPartition& partition, const RegSchedule& schedule,
                       const SolverConfig& config, MmvSolver solver,
                       const CodingOptions& options = {});

/// Per-column Lasso with a shared gamma, parallel over columns.
/// `options.previous` warm-starts each column.
Matrix code_samples_dense(const Matrix& dictionary, const Matrix& signals, double gamma, bool nonneg,
                          const SolverConfig& config, const CodingOptions& options = {});

}  // namespace hsidl
