#pragma once

#include "hsidl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hsidl {

struct SvmConfig {
  // Stop once the spread of projected dual gradients falls below eps.
  double eps = 1e-4;
  int max_passes = 20000;
  std::uint64_t seed = 1;
};

/// Linear classifier sign(w.x + b). The bias is trained as the weight of a
/// constant feature 1, so it is regularized together with w.
struct BinarySvm {
  Vector weights;
  double bias = 0.0;
  double C = 1.0;
  // Final projected-gradient spread of the dual; not persisted.
  double kkt_violation = 0.0;

  double decision(const Eigen::Ref<const Vector>& x) const { return weights.dot(x) + bias; }
};

/// Dual coordinate descent on the L1-hinge SVM dual. Columns of `samples`
/// are the feature vectors; labels are -1 / +1.
BinarySvm train_binary(const Matrix& samples, const std::vector<int>& labels, double C,
                       const SvmConfig& config = {});

/// 1/2 (||w||^2 + b^2) + C sum_i max(0, 1 - l_i (w.x_i + b)).
double svm_primal_objective(const BinarySvm& model, const Matrix& samples, const std::vector<int>& labels);

struct PairClassifier {
  int class_a = 0;  // voted for when the decision value is >= 0
  int class_b = 0;
  BinarySvm svm;
};

struct OvoSvmModel {
  int num_classes = 0;
  std::size_t dim = 0;
  std::vector<PairClassifier> classifiers;  // (1,2), (1,3), ..., (M-1,M)
};

/// One binary machine per unordered class pair, each trained on the
/// samples of its two classes only. Labels are class ids 1..num_classes.
OvoSvmModel train_ovo(const Matrix& samples, const std::vector<int>& labels, int num_classes, double C,
                      const SvmConfig& config = {}, unsigned threads = 1);

/// Majority vote over pairwise decisions; ties go to the lowest class id.
int predict(const OvoSvmModel& model, const Eigen::Ref<const Vector>& sample);
std::vector<int> predict_all(const OvoSvmModel& model, const Matrix& samples);

struct EvalReport {
  int num_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted], 0-based class index
  std::vector<double> per_class_accuracy;           // NaN for classes absent from the truth
  double overall_accuracy = 0.0;
  double average_accuracy = 0.0;  // over classes present in the truth
  double kappa = 0.0;
  std::size_t total = 0;
};

EvalReport evaluate(const std::vector<int>& predictions, const std::vector<int>& truth, int num_classes);
EvalReport evaluate_confusion(const std::vector<std::vector<std::size_t>>& confusion);

struct CvResult {
  double C = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_accuracy;  // aligned with grid
};

/// Stratified k-fold search over C; highest mean fold accuracy wins, ties
/// go to the smallest C. Deterministic given the seed.
CvResult cross_validate(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                        const std::vector<double>& c_grid, int folds, std::uint64_t seed,
                        const SvmConfig& config = {}, unsigned threads = 1);

/// Stratified fold index for each sample.
std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed);

void save_model(const OvoSvmModel& model, const std::filesystem::path& path);
OvoSvmModel load_model(const std::filesystem::path& path);

}  // namespace hsidl
