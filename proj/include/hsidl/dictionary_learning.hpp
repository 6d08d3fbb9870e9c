#pragma once

#include "hsidl/context.hpp"
#include "hsidl/regularization.hpp"
#include "hsidl/solvers.hpp"
#include "hsidl/types.hpp"

#include <cstdint>
#include <vector>

namespace hsidl {

enum class LearnMode {
  SDL,   // spectra, per-sample Lasso
  CDL,   // window-moment features, per-sample Lasso
  SCDL,  // spectra grouped by patches, l2/l1 joint sparsity
};

const char* to_string(LearnMode mode);
LearnMode parse_learn_mode(const std::string& text);

struct LearnConfig {
  LearnMode mode = LearnMode::SCDL;
  std::size_t n_atoms = 0;
  int outer_iters = 40;
  double outer_rel_tol = 1e-5;
  SolverConfig inner;
  std::uint64_t seed = 0;
  // SDL / CDL weight and sign constraint.
  double gamma = 1.0;
  bool nonneg = false;
  MmvSolver solver = MmvSolver::MFocuss;
  unsigned threads = 1;

  void validate() const;
};

struct LearnIteration {
  int iteration = 0;
  double objective_after_coding = 0.0;
  double objective = 0.0;  // after the dictionary update
  double fit = 0.0;        // 1/2 ||X - D Y||_F^2 after the dictionary update
  std::size_t atoms_replaced = 0;
  double seconds = 0.0;
};

struct LearnReport {
  double initial_objective = 0.0;  // Y = 0
  std::vector<LearnIteration> iterations;
  bool converged = false;
};

struct LearnResult {
  Dictionary dictionary;
  Matrix codes;  // K x N, double precision
  LearnReport report;
};

/// K distinct samples drawn uniformly (seeded), each scaled to unit norm.
/// All-zero samples are skipped and another one drawn in their place.
Dictionary init_dictionary(const Matrix& samples, std::size_t n_atoms, std::uint64_t seed);

struct DictionaryUpdate {
  Dictionary dictionary;
  std::size_t atoms_replaced = 0;
};

/// One block-coordinate sweep over the atoms: each atom becomes the
/// least-squares fit to its partial residual R_j y_j / ||y_j||^2 projected
/// onto the unit ball (and the nonnegative orthant when `nonneg`). An atom
/// whose code row is zero is replaced by the normalized training sample
/// with the largest current residual.
DictionaryUpdate update_dictionary(const Dictionary& dictionary, const Matrix& signals,
                                   const Matrix& codes, bool nonneg = false);

/// Full objective: fit plus gamma ||y||_1 summed over samples (SDL/CDL) or
/// gamma_G ||Y_G||_{2,1} summed over groups (SCDL).
double learning_objective(const Matrix& dictionary, const Matrix& signals, const Matrix& codes,
                          const LearnConfig& config, const GroupPartition* partition,
                          const RegSchedule& schedule);

/// Alternates sparse coding and dictionary updates starting from `initial`.
/// `partition` is required for SCDL and ignored otherwise.
LearnResult learn(const Matrix& signals, const GroupPartition* partition, const LearnConfig& config,
                  const RegSchedule& schedule, const Dictionary& initial);

/// Same, with the dictionary initialized from the signals themselves.
LearnResult learn(const Matrix& signals, const GroupPartition* partition, const LearnConfig& config,
                  const RegSchedule& schedule);

/// Codes `signals` against a fixed dictionary with the mode's regularizer.
Matrix encode(const Matrix& dictionary, const Matrix& signals, const GroupPartition* partition,
              const LearnConfig& config, const RegSchedule& schedule);

}  // namespace hsidl
