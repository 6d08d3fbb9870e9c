#pragma once

#include "hsidl/context.hpp"
#include "hsidl/dictionary_learning.hpp"
#include "hsidl/error.hpp"
#include "hsidl/svm.hpp"
#include "hsidl/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hsidl {

enum class Command { Learn, Classify, Msi, Bench };

/// Everything a pipeline run needs. Loaded from one JSON object whose keys
/// match the field names; unknown keys are rejected.
struct PipelineConfig {
  std::filesystem::path cube;
  std::filesystem::path labels;        // split with train_fraction + seed
  std::filesystem::path train_labels;  // or a fixed split
  std::filesystem::path test_labels;
  double train_fraction = 0.1;
  std::uint64_t seed = 0;

  LearnMode mode = LearnMode::SCDL;
  std::size_t patch = 8;   // SCDL group side
  std::size_t window = 5;  // CDL window side (odd)
  MomentOrder moments = MomentOrder::MeanOnly;

  std::size_t atoms = 0;  // 0: atoms_frac of the training set
  double atoms_frac = 0.5;
  std::vector<double> atoms_frac_grid;  // SDL/CDL cross-validation
  double sigma2 = 10.0;
  double gamma = 1.0;
  std::vector<double> gamma_grid;  // SDL/CDL cross-validation
  bool nonneg = true;              // SDL only
  MmvSolver solver = MmvSolver::MFocuss;
  int outer_iters = 40;
  double outer_tol = 1e-5;
  SolverConfig inner;

  std::vector<double> c_grid = {0.1, 1.0, 10.0, 100.0};
  int folds = 5;
  unsigned threads = 1;
  int repeats = 1;

  std::filesystem::path out = "out";
  std::filesystem::path dictionary;  // classify/msi: skip learning
  std::filesystem::path model;       // classify: skip SVM training

  std::size_t msi_bins = 8;
  bool reuse_c = false;  // msi: keep the HSI-level C instead of re-running CV

  std::vector<unsigned> bench_threads = {1, 2, 4};
  int bench_iters = 100;

  /// Throws Error(Config) naming the offending field.
  void validate(Command command) const;
};

PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig base = {});
PipelineConfig load_config(const std::filesystem::path& path);

struct Dataset {
  HsiCube cube;
  LabelMap train;
  LabelMap test;
  int num_classes = 0;
};

/// Loads the cube and the train/test split; class ids over train and test
/// together must be exactly 1..M.
Dataset load_dataset(const PipelineConfig& config, std::uint64_t split_seed);

/// Feature matrix for the given pixels: spectra (SDL, SCDL) or window
/// moments (CDL).
Matrix pixel_features(const Dataset& data, const PipelineConfig& config,
                      const std::vector<std::size_t>& pixel_indices);

std::vector<std::size_t> pixel_indices(const HsiCube& cube, const LabelMap& labels);

struct LearnOutcome {
  Dictionary dictionary;
  LearnReport report;
  Matrix train_codes;  // K x |train|
  Matrix test_codes;   // K x |test|
  Matrix all_codes;    // K x N; SCDL always, other modes only when requested
};

struct LearnParams {
  double gamma = 1.0;
  double atoms_frac = 0.5;
  std::uint64_t seed = 0;
};

LearnConfig make_learn_config(const PipelineConfig& config, const LearnParams& params, std::size_t n_atoms);

/// Learns (or takes `fixed`) a dictionary and codes the labeled pixels.
LearnOutcome learn_and_encode(const Dataset& data, const PipelineConfig& config, const LearnParams& params,
                              const Dictionary* fixed = nullptr, bool encode_all = false);

struct ClassifyRun {
  EvalReport report;
  double C = 0.0;
  double gamma = 0.0;
  double atoms_frac = 0.0;
  std::vector<int> test_predictions;
  std::vector<int> train_predictions;
};

struct LearnSummary {
  std::size_t atoms = 0;
  std::size_t iterations = 0;
  double final_objective = 0.0;
  bool monotone = true;
};

LearnSummary cmd_learn(const PipelineConfig& config);
std::vector<ClassifyRun> cmd_classify(const PipelineConfig& config);

struct MsiSummary {
  double hsi_oa = 0.0;
  double msi_oa = 0.0;
  double chsi_oa = 0.0;
};
MsiSummary cmd_msi(const PipelineConfig& config);

struct BenchSummary {
  std::vector<unsigned> threads;
  std::vector<double> total_seconds;
  std::vector<double> speedup;
  bool identical = true;
};
BenchSummary cmd_bench(const PipelineConfig& config);

/// RGB palette used for class maps; class c uses entry (c - 1) % 16.
const std::vector<std::array<unsigned char, 3>>& class_palette();

/// Binary PPM of the labeled pixels colored by predicted class; unlabeled
/// pixels are black.
void write_class_map(const std::filesystem::path& path, std::size_t height, std::size_t width,
                     const std::vector<LabelEntry>& predicted);

nlohmann::json report_to_json(const EvalReport& report);

/// CLI exit code for an error kind: 2 config, 3 data, 4 numerical.
int exit_code_for(ErrorKind kind);

}  // namespace hsidl
