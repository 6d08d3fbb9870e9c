#include "hsidl/dictionary_learning.hpp"

#include "hsidl/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace hsidl {

const char* to_string(LearnMode mode) {
  switch (mode) {
    case LearnMode::SDL: return "SDL";
    case LearnMode::CDL: return "CDL";
    case LearnMode::SCDL: return "SCDL";
  }
  return "?";
}

LearnMode parse_learn_mode(const std::string& text) {
  if (text == "SDL" || text == "sdl") return LearnMode::SDL;
  if (text == "CDL" || text == "cdl") return LearnMode::CDL;
  if (text == "SCDL" || text == "scdl") return LearnMode::SCDL;
  throw Error(ErrorKind::Config, "mode: unknown learning mode '" + text + "'");
}

void LearnConfig::validate() const {
  if (n_atoms < 1) throw Error(ErrorKind::InvalidArgument, "n_atoms must be at least 1");
  if (outer_iters < 1) throw Error(ErrorKind::InvalidArgument, "outer_iters must be at least 1");
  if (!(outer_rel_tol >= 0.0)) throw Error(ErrorKind::InvalidArgument, "outer_rel_tol must be >= 0");
  if (mode != LearnMode::SCDL && !(gamma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  }
  inner.validate();
}

Dictionary init_dictionary(const Matrix& samples, std::size_t n_atoms, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(samples.cols());
  if (n_atoms == 0 || n_atoms > n) {
    throw Error(ErrorKind::NotEnoughSamples,
                "need " + std::to_string(n_atoms) + " atoms from " + std::to_string(n) + " samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dictionary dict;
  dict.atoms.resize(samples.rows(), static_cast<Eigen::Index>(n_atoms));
  std::size_t filled = 0;
  for (std::size_t idx : order) {
    if (filled == n_atoms) break;
    const auto column = samples.col(static_cast<Eigen::Index>(idx));
    const double norm = column.norm();
    if (norm == 0.0) continue;
    dict.atoms.col(static_cast<Eigen::Index>(filled++)) = column / norm;
  }
  if (filled == 0) throw Error(ErrorKind::AllZeroSamples, "every training sample is zero");
  if (filled < n_atoms) {
    throw Error(ErrorKind::NotEnoughSamples,
                "only " + std::to_string(filled) + " nonzero samples for " + std::to_string(n_atoms) + " atoms");
  }
  return dict;
}

namespace {

// Projection onto {d : ||d|| <= 1} (intersected with d >= 0 if nonneg).
void project_atom(Eigen::Ref<Vector> atom, bool nonneg) {
  if (nonneg) atom = atom.cwiseMax(0.0);
  const double norm = atom.norm();
  if (norm > 1.0) atom /= norm;
}

}  // namespace

DictionaryUpdate update_dictionary(const Dictionary& dictionary, const Matrix& signals,
                                   const Matrix& codes, bool nonneg) {
  const Matrix& D0 = dictionary.atoms;
  const Eigen::Index K = D0.cols();
  const Eigen::Index N = signals.cols();
  if (signals.rows() != D0.rows() || codes.rows() != K || codes.cols() != N) {
    throw Error(ErrorKind::DimensionMismatch, "dictionary, signals and codes disagree in shape");
  }

  DictionaryUpdate out;
  out.dictionary.atoms = D0;
  Matrix& D = out.dictionary.atoms;
  Matrix residual = signals - D * codes;

  // nonzero pattern of each code row
  std::vector<std::vector<Eigen::Index>> support(static_cast<std::size_t>(K));
  for (Eigen::Index n = 0; n < N; ++n) {
    for (Eigen::Index k = 0; k < K; ++k) {
      if (codes(k, n) != 0.0) support[static_cast<std::size_t>(k)].push_back(n);
    }
  }

  std::vector<char> used_for_replacement(static_cast<std::size_t>(N), 0);
  Vector target(D.rows());
  Vector col_norms;
  bool norms_stale = true;
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto& cols = support[static_cast<std::size_t>(j)];
    double energy = 0.0;
    for (auto n : cols) energy += codes(j, n) * codes(j, n);

    if (energy == 0.0) {
      // residual is unaffected by atom j; pick the worst-fit sample
      if (norms_stale) {
        col_norms = residual.colwise().norm().transpose();
        norms_stale = false;
      }
      Eigen::Index best = -1;
      for (Eigen::Index n = 0; n < N; ++n) {
        if (used_for_replacement[static_cast<std::size_t>(n)]) continue;
        Vector candidate = signals.col(n);
        if (nonneg) candidate = candidate.cwiseMax(0.0);
        if (candidate.norm() == 0.0) continue;
        if (best < 0 || col_norms[n] > col_norms[best]) best = n;
      }
      if (best >= 0) {
        used_for_replacement[static_cast<std::size_t>(best)] = 1;
        Vector atom = signals.col(best);
        if (nonneg) atom = atom.cwiseMax(0.0);
        D.col(j) = atom / atom.norm();
        ++out.atoms_replaced;
      } else {
        project_atom(D.col(j), nonneg);
      }
      continue;
    }

    // R_j y_j = E y_j + d_j ||y_j||^2
    target = D.col(j) * energy;
    for (auto n : cols) target.noalias() += residual.col(n) * codes(j, n);
    target /= energy;
    project_atom(target, nonneg);

    const Vector delta = target - D.col(j);
    if (delta.squaredNorm() != 0.0) {
      for (auto n : cols) residual.col(n).noalias() -= delta * codes(j, n);
      D.col(j) = target;
      norms_stale = true;
    }
  }
  return out;
}

double learning_objective(const Matrix& dictionary, const Matrix& signals, const Matrix& codes,
                          const LearnConfig& config, const GroupPartition* partition,
                          const RegSchedule& schedule) {
  const double fit = 0.5 * (signals - dictionary * codes).squaredNorm();
  if (config.mode != LearnMode::SCDL) {
    return fit + config.gamma * codes.cwiseAbs().sum();
  }
  if (!partition) throw Error(ErrorKind::InvalidArgument, "SCDL objective needs a partition");
  double reg = 0.0;
  for (const auto& members : partition->groups) {
    if (members.empty()) continue;
    double group = 0.0;
    for (Eigen::Index k = 0; k < codes.rows(); ++k) {
      double ss = 0.0;
      for (auto n : members) {
        const double v = codes(k, static_cast<Eigen::Index>(n));
        ss += v * v;
      }
      group += std::sqrt(ss);
    }
    reg += schedule.gamma(members.size()) * group;
  }
  return fit + reg;
}

namespace {

Matrix code_step(const Matrix& dictionary, const Matrix& signals, const GroupPartition* partition,
                 const LearnConfig& config, const RegSchedule& schedule, const Matrix* previous) {
  CodingOptions options;
  options.threads = config.threads;
  options.previous = previous;
  if (config.mode == LearnMode::SCDL) {
    if (!partition) throw Error(ErrorKind::InvalidArgument, "SCDL requires a group partition");
    return code_groups_dense(dictionary, signals, *partition, schedule, config.inner, config.solver, options);
  }
  return code_samples_dense(dictionary, signals, config.gamma, config.nonneg, config.inner, options);
}

}  // namespace

Matrix encode(const Matrix& dictionary, const Matrix& signals, const GroupPartition* partition,
              const LearnConfig& config, const RegSchedule& schedule) {
  return code_step(dictionary, signals, partition, config, schedule, nullptr);
}

LearnResult learn(const Matrix& signals, const GroupPartition* partition, const LearnConfig& config,
                  const RegSchedule& schedule, const Dictionary& initial) {
  config.validate();
  if (initial.bands() != static_cast<std::size_t>(signals.rows())) {
    throw Error(ErrorKind::DimensionMismatch, "initial dictionary band count does not match the signals");
  }
  if (config.mode == LearnMode::SCDL) {
    if (!partition) throw Error(ErrorKind::InvalidArgument, "SCDL requires a group partition");
    if (partition->pixel_count() != static_cast<std::size_t>(signals.cols())) {
      throw Error(ErrorKind::DimensionMismatch, "partition does not cover the signals");
    }
  }

  using clock = std::chrono::steady_clock;
  LearnResult result;
  result.dictionary = initial;
  const bool nonneg_atoms = config.mode == LearnMode::SDL && config.nonneg;
  if (nonneg_atoms) {
    for (Eigen::Index j = 0; j < result.dictionary.atoms.cols(); ++j) {
      project_atom(result.dictionary.atoms.col(j), true);
    }
  }
  result.codes = Matrix::Zero(initial.atoms.cols(), signals.cols());
  result.report.initial_objective = 0.5 * signals.squaredNorm();

  double previous_objective = result.report.initial_objective;
  for (int it = 1; it <= config.outer_iters; ++it) {
    const auto start = clock::now();
    LearnIteration step;
    step.iteration = it;

    result.codes = code_step(result.dictionary.atoms, signals, partition, config, schedule,
                             it > 1 ? &result.codes : nullptr);
    step.objective_after_coding =
        learning_objective(result.dictionary.atoms, signals, result.codes, config, partition, schedule);

    auto updated = update_dictionary(result.dictionary, signals, result.codes, nonneg_atoms);
    result.dictionary = std::move(updated.dictionary);
    step.atoms_replaced = updated.atoms_replaced;
    step.fit = 0.5 * (signals - result.dictionary.atoms * result.codes).squaredNorm();
    step.objective =
        learning_objective(result.dictionary.atoms, signals, result.codes, config, partition, schedule);
    step.seconds = std::chrono::duration<double>(clock::now() - start).count();
    result.report.iterations.push_back(step);

    const double change = std::abs(previous_objective - step.objective) /
                          std::max(std::abs(previous_objective), 1e-300);
    previous_objective = step.objective;
    if (it > 1 && change < config.outer_rel_tol) {
      result.report.converged = true;
      break;
    }
  }
  return result;
}

LearnResult learn(const Matrix& signals, const GroupPartition* partition, const LearnConfig& config,
                  const RegSchedule& schedule) {
  config.validate();
  return learn(signals, partition, config, schedule, init_dictionary(signals, config.n_atoms, config.seed));
}

}  // namespace hsidl
