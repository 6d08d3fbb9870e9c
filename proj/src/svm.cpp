#include "hsidl/svm.hpp"

#include "hsidl/error.hpp"
#include "hsidl/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace hsidl {

using json = nlohmann::json;

BinarySvm train_binary(const Matrix& samples, const std::vector<int>& labels, double C,
                       const SvmConfig& config) {
  const auto n = static_cast<std::size_t>(samples.cols());
  if (n == 0) throw Error(ErrorKind::EmptyInput, "no training samples");
  if (labels.size() != n) throw Error(ErrorKind::LengthMismatch, "label count does not match samples");
  if (!(C > 0.0)) throw Error(ErrorKind::InvalidArgument, "C must be positive");
  bool has_pos = false, has_neg = false;
  for (int l : labels) {
    if (l == 1) has_pos = true;
    else if (l == -1) has_neg = true;
    else throw Error(ErrorKind::InvalidArgument, "binary labels must be -1 or +1");
  }
  if (!has_pos || !has_neg) throw Error(ErrorKind::SingleClass, "binary training needs both labels");

  const Eigen::Index d = samples.rows();
  Vector w = Vector::Zero(d);
  double b = 0.0;
  Vector alpha = Vector::Zero(static_cast<Eigen::Index>(n));
  Vector qii(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    qii[static_cast<Eigen::Index>(i)] = samples.col(static_cast<Eigen::Index>(i)).squaredNorm() + 1.0;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  BinarySvm model;
  model.C = C;
  double spread = std::numeric_limits<double>::infinity();
  for (int pass = 0; pass < config.max_passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
      const auto col = static_cast<Eigen::Index>(i);
      const double yi = labels[i];
      const double g = yi * (w.dot(samples.col(col)) + b) - 1.0;
      double& a = alpha[col];
      double pg = g;
      if (a == 0.0) pg = std::min(g, 0.0);
      else if (a == C) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0) {
        const double next = std::clamp(a - g / qii[col], 0.0, C);
        const double step = (next - a) * yi;
        if (step != 0.0) {
          w.noalias() += step * samples.col(col);
          b += step;
        }
        a = next;
      }
    }
    spread = pg_max - pg_min;
    if (spread <= config.eps) break;
  }
  model.weights = std::move(w);
  model.bias = b;
  model.kkt_violation = spread;
  if (!model.weights.allFinite() || !std::isfinite(b)) {
    throw Error(ErrorKind::Numerical, "SVM training diverged");
  }
  return model;
}

double svm_primal_objective(const BinarySvm& model, const Matrix& samples, const std::vector<int>& labels) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    loss += std::max(0.0, 1.0 - labels[static_cast<std::size_t>(i)] * model.decision(samples.col(i)));
  }
  return 0.5 * (model.weights.squaredNorm() + model.bias * model.bias) + model.C * loss;
}

OvoSvmModel train_ovo(const Matrix& samples, const std::vector<int>& labels, int num_classes, double C,
                      const SvmConfig& config, unsigned threads) {
  if (samples.cols() == 0) throw Error(ErrorKind::EmptyInput, "no training samples");
  if (labels.size() != static_cast<std::size_t>(samples.cols())) {
    throw Error(ErrorKind::LengthMismatch, "label count does not match samples");
  }
  if (num_classes < 2) throw Error(ErrorKind::InvalidArgument, "need at least two classes");
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(num_classes) + 1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > num_classes) {
      throw Error(ErrorKind::InvalidArgument, "class id " + std::to_string(labels[i]) + " out of range");
    }
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  }

  OvoSvmModel model;
  model.num_classes = num_classes;
  model.dim = static_cast<std::size_t>(samples.rows());
  for (int a = 1; a <= num_classes; ++a)
    for (int b = a + 1; b <= num_classes; ++b) model.classifiers.push_back({a, b, {}});

  parallel_for(model.classifiers.size(), threads, [&](std::size_t p) {
    auto& pair = model.classifiers[p];
    const auto& ia = members[static_cast<std::size_t>(pair.class_a)];
    const auto& ib = members[static_cast<std::size_t>(pair.class_b)];
    if (ia.empty() || ib.empty()) {
      throw Error(ErrorKind::SingleClass,
                  "pair (" + std::to_string(pair.class_a) + ", " + std::to_string(pair.class_b) +
                      "): class " + std::to_string(ia.empty() ? pair.class_a : pair.class_b) +
                      " has no training samples",
                  p);
    }
    Matrix x(samples.rows(), static_cast<Eigen::Index>(ia.size() + ib.size()));
    std::vector<int> l;
    l.reserve(ia.size() + ib.size());
    Eigen::Index c = 0;
    for (auto i : ia) { x.col(c++) = samples.col(i); l.push_back(1); }
    for (auto i : ib) { x.col(c++) = samples.col(i); l.push_back(-1); }
    SvmConfig pair_config = config;
    pair_config.seed = config.seed + p;
    pair.svm = train_binary(x, l, C, pair_config);
  });
  return model;
}

int predict(const OvoSvmModel& model, const Eigen::Ref<const Vector>& sample) {
  if (static_cast<std::size_t>(sample.size()) != model.dim) {
    throw Error(ErrorKind::DimensionMismatch, "sample dimension " + std::to_string(sample.size()) +
                                                  " does not match model dimension " + std::to_string(model.dim));
  }
  std::vector<int> votes(static_cast<std::size_t>(model.num_classes) + 1, 0);
  for (const auto& pair : model.classifiers) {
    ++votes[static_cast<std::size_t>(pair.svm.decision(sample) >= 0.0 ? pair.class_a : pair.class_b)];
  }
  int best = 1;
  for (int c = 2; c <= model.num_classes; ++c) {
    if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

std::vector<int> predict_all(const OvoSvmModel& model, const Matrix& samples) {
  std::vector<int> out(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index i = 0; i < samples.cols(); ++i) out[static_cast<std::size_t>(i)] = predict(model, samples.col(i));
  return out;
}

EvalReport evaluate_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  EvalReport r;
  r.num_classes = static_cast<int>(confusion.size());
  r.confusion = confusion;
  const std::size_t m = confusion.size();
  std::vector<double> rows(m, 0.0), cols(m, 0.0);
  double diag = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (confusion[i].size() != m) throw Error(ErrorKind::DimensionMismatch, "confusion matrix must be square");
    for (std::size_t j = 0; j < m; ++j) {
      rows[i] += static_cast<double>(confusion[i][j]);
      cols[j] += static_cast<double>(confusion[i][j]);
      r.total += confusion[i][j];
    }
    diag += static_cast<double>(confusion[i][i]);
  }
  if (r.total == 0) throw Error(ErrorKind::EmptyInput, "no samples to evaluate");
  const double total = static_cast<double>(r.total);

  r.per_class_accuracy.assign(m, std::numeric_limits<double>::quiet_NaN());
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i] == 0.0) continue;
    r.per_class_accuracy[i] = static_cast<double>(confusion[i][i]) / rows[i];
    recall_sum += r.per_class_accuracy[i];
    ++present;
  }
  r.overall_accuracy = diag / total;
  r.average_accuracy = recall_sum / static_cast<double>(present);

  double pe = 0.0;
  for (std::size_t k = 0; k < m; ++k) pe += rows[k] * cols[k];
  pe /= total * total;
  // pe == 1 only when truth and predictions are one identical class
  r.kappa = pe < 1.0 ? (r.overall_accuracy - pe) / (1.0 - pe) : 1.0;
  return r;
}

EvalReport evaluate(const std::vector<int>& predictions, const std::vector<int>& truth, int num_classes) {
  if (predictions.size() != truth.size()) {
    throw Error(ErrorKind::LengthMismatch, "predictions and truth differ in length");
  }
  if (truth.empty()) throw Error(ErrorKind::EmptyInput, "no samples to evaluate");
  if (num_classes < 1) throw Error(ErrorKind::InvalidArgument, "num_classes must be positive");
  const auto m = static_cast<std::size_t>(num_classes);
  std::vector<std::vector<std::size_t>> confusion(m, std::vector<std::size_t>(m, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || truth[i] > num_classes || predictions[i] < 1 || predictions[i] > num_classes) {
      throw Error(ErrorKind::InvalidArgument, "class id out of range at position " + std::to_string(i), i);
    }
    ++confusion[static_cast<std::size_t>(truth[i] - 1)][static_cast<std::size_t>(predictions[i] - 1)];
  }
  return evaluate_confusion(confusion);
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorKind::InvalidArgument, "need at least two folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), 0);
  // continue the round-robin across classes so folds stay balanced in size
  std::size_t offset = 0;
  for (auto& [cls, members] : by_class) {
    if (members.size() < 2) {
      throw Error(ErrorKind::ClassTooSmall,
                  "class " + std::to_string(cls) + " has fewer than 2 training samples",
                  static_cast<std::size_t>(cls));
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i) {
      fold[members[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(folds));
    }
    offset += members.size();
  }
  return fold;
}

CvResult cross_validate(const Matrix& samples, const std::vector<int>& labels, int num_classes,
                        const std::vector<double>& c_grid, int folds, std::uint64_t seed,
                        const SvmConfig& config, unsigned threads) {
  if (c_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty C grid");
  if (labels.size() != static_cast<std::size_t>(samples.cols())) {
    throw Error(ErrorKind::LengthMismatch, "label count does not match samples");
  }
  const auto fold_of = stratified_folds(labels, folds, seed);

  CvResult result;
  result.grid = c_grid;
  std::sort(result.grid.begin(), result.grid.end());
  result.mean_accuracy.assign(result.grid.size(), 0.0);

  for (std::size_t g = 0; g < result.grid.size(); ++g) {
    double acc_sum = 0.0;
    int used = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train_idx, val_idx;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        (fold_of[i] == f ? val_idx : train_idx).push_back(static_cast<Eigen::Index>(i));
      }
      if (val_idx.empty()) continue;
      Matrix xtr(samples.rows(), static_cast<Eigen::Index>(train_idx.size()));
      std::vector<int> ltr;
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        xtr.col(static_cast<Eigen::Index>(i)) = samples.col(train_idx[i]);
        ltr.push_back(labels[static_cast<std::size_t>(train_idx[i])]);
      }
      const auto model = train_ovo(xtr, ltr, num_classes, result.grid[g], config, threads);
      std::size_t correct = 0;
      for (auto i : val_idx) {
        if (predict(model, samples.col(i)) == labels[static_cast<std::size_t>(i)]) ++correct;
      }
      acc_sum += static_cast<double>(correct) / static_cast<double>(val_idx.size());
      ++used;
    }
    result.mean_accuracy[g] = acc_sum / used;
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < result.grid.size(); ++g) {
    if (result.mean_accuracy[g] > result.mean_accuracy[best]) best = g;
  }
  result.C = result.grid[best];
  return result;
}

void save_model(const OvoSvmModel& model, const std::filesystem::path& path) {
  json j;
  j["num_classes"] = model.num_classes;
  j["dim"] = model.dim;
  j["classifiers"] = json::array();
  for (const auto& pair : model.classifiers) {
    j["classifiers"].push_back({{"class_a", pair.class_a},
                                {"class_b", pair.class_b},
                                {"C", pair.svm.C},
                                {"bias", pair.svm.bias},
                                {"weights", std::vector<double>(pair.svm.weights.data(),
                                                                pair.svm.weights.data() + pair.svm.weights.size())}});
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << j.dump() << '\n';
}

OvoSvmModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  OvoSvmModel model;
  try {
    const json j = json::parse(in);
    model.num_classes = j.at("num_classes").get<int>();
    model.dim = j.at("dim").get<std::size_t>();
    for (const auto& c : j.at("classifiers")) {
      PairClassifier pair;
      pair.class_a = c.at("class_a").get<int>();
      pair.class_b = c.at("class_b").get<int>();
      pair.svm.C = c.at("C").get<double>();
      pair.svm.bias = c.at("bias").get<double>();
      const auto w = c.at("weights").get<std::vector<double>>();
      if (w.size() != model.dim) throw Error(ErrorKind::HeaderParse, path.string() + ": weight length mismatch");
      pair.svm.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
      model.classifiers.push_back(std::move(pair));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::HeaderParse, path.string() + ": " + e.what());
  }
  const auto m = static_cast<std::size_t>(model.num_classes);
  if (model.classifiers.size() != m * (m - 1) / 2) {
    throw Error(ErrorKind::HeaderParse, path.string() + ": expected M(M-1)/2 classifiers");
  }
  return model;
}

}  // namespace hsidl
