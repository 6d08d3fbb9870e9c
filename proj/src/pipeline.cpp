#include "hsidl/pipeline.hpp"

#include "hsidl/error.hpp"
#include "hsidl/io.hpp"
#include "hsidl/msi.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <set>

namespace hsidl {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorKind::Config, field + ": " + what);
}

MomentOrder parse_moments(const std::string& text) {
  if (text == "mean") return MomentOrder::MeanOnly;
  if (text == "mean_std") return MomentOrder::MeanAndStd;
  config_error("moments", "expected \"mean\" or \"mean_std\", got \"" + text + "\"");
}

MmvSolver parse_solver(const std::string& text) {
  if (text == "mfocuss") return MmvSolver::MFocuss;
  if (text == "bcd") return MmvSolver::Bcd;
  config_error("solver", "expected \"mfocuss\" or \"bcd\", got \"" + text + "\"");
}

void require_positive_grid(const std::vector<double>& grid, const std::string& field) {
  for (double v : grid) {
    if (!(v > 0.0) || !std::isfinite(v)) config_error(field, "values must be positive");
  }
}

}  // namespace

PipelineConfig config_from_json(const json& j, PipelineConfig base) {
  if (!j.is_object()) config_error("config", "expected a JSON object");
  PipelineConfig& c = base;
  const std::map<std::string, std::function<void(const json&)>> setters = {
      {"cube", [&](const json& v) { c.cube = v.get<std::string>(); }},
      {"labels", [&](const json& v) { c.labels = v.get<std::string>(); }},
      {"train_labels", [&](const json& v) { c.train_labels = v.get<std::string>(); }},
      {"test_labels", [&](const json& v) { c.test_labels = v.get<std::string>(); }},
      {"train_fraction", [&](const json& v) { c.train_fraction = v.get<double>(); }},
      {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }},
      {"mode", [&](const json& v) { c.mode = parse_learn_mode(v.get<std::string>()); }},
      {"patch", [&](const json& v) { c.patch = v.get<std::size_t>(); }},
      {"window", [&](const json& v) { c.window = v.get<std::size_t>(); }},
      {"moments", [&](const json& v) { c.moments = parse_moments(v.get<std::string>()); }},
      {"atoms", [&](const json& v) { c.atoms = v.get<std::size_t>(); }},
      {"atoms_frac", [&](const json& v) { c.atoms_frac = v.get<double>(); }},
      {"atoms_frac_grid", [&](const json& v) { c.atoms_frac_grid = v.get<std::vector<double>>(); }},
      {"sigma2", [&](const json& v) { c.sigma2 = v.get<double>(); }},
      {"gamma", [&](const json& v) { c.gamma = v.get<double>(); }},
      {"gamma_grid", [&](const json& v) { c.gamma_grid = v.get<std::vector<double>>(); }},
      {"nonneg", [&](const json& v) { c.nonneg = v.get<bool>(); }},
      {"solver", [&](const json& v) { c.solver = parse_solver(v.get<std::string>()); }},
      {"outer_iters", [&](const json& v) { c.outer_iters = v.get<int>(); }},
      {"outer_tol", [&](const json& v) { c.outer_tol = v.get<double>(); }},
      {"max_iters", [&](const json& v) { c.inner.max_iters = v.get<int>(); }},
      {"rel_tol", [&](const json& v) { c.inner.rel_tol = v.get<double>(); }},
      {"prune_tol", [&](const json& v) { c.inner.prune_tol = v.get<double>(); }},
      {"lasso_max_sweeps", [&](const json& v) { c.inner.lasso_max_sweeps = v.get<int>(); }},
      {"c_grid", [&](const json& v) { c.c_grid = v.get<std::vector<double>>(); }},
      {"folds", [&](const json& v) { c.folds = v.get<int>(); }},
      {"threads", [&](const json& v) { c.threads = v.get<unsigned>(); }},
      {"repeats", [&](const json& v) { c.repeats = v.get<int>(); }},
      {"out", [&](const json& v) { c.out = v.get<std::string>(); }},
      {"dictionary", [&](const json& v) { c.dictionary = v.get<std::string>(); }},
      {"model", [&](const json& v) { c.model = v.get<std::string>(); }},
      {"msi_bins", [&](const json& v) { c.msi_bins = v.get<std::size_t>(); }},
      {"reuse_c", [&](const json& v) { c.reuse_c = v.get<bool>(); }},
      {"bench_threads", [&](const json& v) { c.bench_threads = v.get<std::vector<unsigned>>(); }},
      {"bench_iters", [&](const json& v) { c.bench_iters = v.get<int>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) config_error(key, "unknown configuration key");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      config_error(key, std::string("wrong type: ") + e.what());
    }
  }
  return base;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) config_error("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    config_error("config", path.string() + ": " + e.what());
  }
  PipelineConfig config = config_from_json(j);
  // relative paths in a config file are relative to the file
  const auto base = path.parent_path();
  for (fs::path* p : {&config.cube, &config.labels, &config.train_labels, &config.test_labels,
                      &config.dictionary, &config.model}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return config;
}

void PipelineConfig::validate(Command command) const {
  if (cube.empty()) config_error("cube", "path is required");
  const bool fixed_split = !train_labels.empty() || !test_labels.empty();
  if (fixed_split && (train_labels.empty() || test_labels.empty())) {
    config_error(train_labels.empty() ? "train_labels" : "test_labels",
                 "train_labels and test_labels must be given together");
  }
  if (!fixed_split && labels.empty()) config_error("labels", "path is required (or train_labels + test_labels)");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) config_error("train_fraction", "must lie in (0, 1)");
  if (mode == LearnMode::SCDL && patch < 1) config_error("patch", "must be at least 1");
  if (mode == LearnMode::CDL && (window < 1 || window % 2 == 0)) config_error("window", "must be odd and >= 1");
  if (!(atoms_frac > 0.0 && atoms_frac <= 1.0)) config_error("atoms_frac", "must lie in (0, 1]");
  for (double f : atoms_frac_grid) {
    if (!(f > 0.0 && f <= 1.0)) config_error("atoms_frac_grid", "values must lie in (0, 1]");
  }
  if (!(sigma2 > 0.0)) config_error("sigma2", "must be positive");
  if (!(gamma > 0.0)) config_error("gamma", "must be positive");
  require_positive_grid(gamma_grid, "gamma_grid");
  if (c_grid.empty()) config_error("c_grid", "must not be empty");
  require_positive_grid(c_grid, "c_grid");
  if (folds < 2) config_error("folds", "must be at least 2");
  if (threads < 1) config_error("threads", "must be at least 1");
  if (repeats < 1) config_error("repeats", "must be at least 1");
  if (outer_iters < 1) config_error("outer_iters", "must be at least 1");
  if (!(outer_tol >= 0.0)) config_error("outer_tol", "must be >= 0");
  if (inner.max_iters < 1) config_error("max_iters", "must be at least 1");
  if (inner.lasso_max_sweeps < 1) config_error("lasso_max_sweeps", "must be at least 1");
  if (!(inner.rel_tol > 0.0)) config_error("rel_tol", "must be positive");
  if (!(inner.prune_tol > 0.0)) config_error("prune_tol", "must be positive");
  if (command == Command::Msi) {
    if (mode == LearnMode::CDL) config_error("mode", "msi runs support SDL and SCDL only");
    if (msi_bins < 1) config_error("msi_bins", "must be at least 1");
  }
  if (command == Command::Bench) {
    if (bench_threads.empty()) config_error("bench_threads", "must not be empty");
    for (unsigned t : bench_threads) {
      if (t < 1) config_error("bench_threads", "values must be at least 1");
    }
    if (bench_iters < 1) config_error("bench_iters", "must be at least 1");
  }
}

// ---------------------------------------------------------------------------
// data

Dataset load_dataset(const PipelineConfig& config, std::uint64_t split_seed) {
  Dataset data;
  data.cube = load_cube(config.cube);
  if (!config.train_labels.empty()) {
    data.train = load_labels(config.train_labels, data.cube.height, data.cube.width);
    data.test = load_labels(config.test_labels, data.cube.height, data.cube.width);
  } else {
    const auto all = load_labels(config.labels, data.cube.height, data.cube.width);
    std::tie(data.train, data.test) = split_labels(all, config.train_fraction, split_seed);
  }
  std::set<int> ids;
  for (const auto* map : {&data.train, &data.test})
    for (const auto& e : map->entries) ids.insert(e.class_id);
  data.num_classes = ids.empty() ? 0 : *ids.rbegin();
  if (ids.size() != static_cast<std::size_t>(data.num_classes)) {
    throw Error(ErrorKind::NonContiguousClasses,
                "class ids must cover 1.." + std::to_string(data.num_classes) + " without gaps");
  }
  if (data.train.entries.empty()) throw Error(ErrorKind::EmptyInput, "training set is empty");
  if (data.test.entries.empty()) throw Error(ErrorKind::EmptyTestSet, "test set is empty");
  data.train.num_classes = data.test.num_classes = data.num_classes;
  return data;
}

std::vector<std::size_t> pixel_indices(const HsiCube& cube, const LabelMap& labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.entries.size());
  for (const auto& e : labels.entries) out.push_back(cube.pixel_index(e.row, e.col));
  return out;
}

Matrix pixel_features(const Dataset& data, const PipelineConfig& config,
                      const std::vector<std::size_t>& indices) {
  if (config.mode != LearnMode::CDL) return data.cube.spectra(indices);
  std::vector<PixelCoord> centers;
  centers.reserve(indices.size());
  for (auto p : indices) centers.emplace_back(p / data.cube.width, p % data.cube.width);
  return window_moments(data.cube, centers, config.window, config.moments).values;
}

namespace {

Matrix gather(const Matrix& source, const std::vector<std::size_t>& columns) {
  Matrix out(source.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = source.col(static_cast<Eigen::Index>(columns[j]));
  }
  return out;
}

std::vector<std::size_t> all_pixels(const HsiCube& cube) {
  std::vector<std::size_t> out(cube.pixels());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::size_t atom_count(const PipelineConfig& config, double atoms_frac, std::size_t n_train) {
  if (config.atoms > 0) return config.atoms;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(atoms_frac * static_cast<double>(n_train))));
}

}  // namespace

LearnConfig make_learn_config(const PipelineConfig& config, const LearnParams& params, std::size_t n_atoms) {
  LearnConfig lc;
  lc.mode = config.mode;
  lc.n_atoms = n_atoms;
  lc.outer_iters = config.outer_iters;
  lc.outer_rel_tol = config.outer_tol;
  lc.inner = config.inner;
  lc.seed = params.seed;
  lc.gamma = params.gamma;
  lc.nonneg = config.mode == LearnMode::SDL && config.nonneg;
  lc.solver = config.solver;
  lc.threads = config.threads;
  return lc;
}

LearnOutcome learn_and_encode(const Dataset& data, const PipelineConfig& config, const LearnParams& params,
                              const Dictionary* fixed, bool encode_all) {
  const auto train_idx = pixel_indices(data.cube, data.train);
  const auto test_idx = pixel_indices(data.cube, data.test);
  const Matrix train_features = pixel_features(data, config, train_idx);
  const std::size_t n_atoms =
      fixed ? fixed->size() : atom_count(config, params.atoms_frac, train_idx.size());
  const LearnConfig lc = make_learn_config(config, params, n_atoms);
  const RegSchedule schedule{config.sigma2};

  LearnOutcome out;
  if (config.mode == LearnMode::SCDL) {
    const Matrix signals = data.cube.spectra();
    const auto partition = partition_into_patches(data.cube.height, data.cube.width, config.patch);
    if (fixed) {
      out.dictionary = *fixed;
    } else {
      auto learned = learn(signals, &partition, lc, schedule, init_dictionary(train_features, n_atoms, params.seed));
      out.dictionary = std::move(learned.dictionary);
      out.report = std::move(learned.report);
    }
    out.all_codes = encode(out.dictionary.atoms, signals, &partition, lc, schedule);
    out.train_codes = gather(out.all_codes, train_idx);
    out.test_codes = gather(out.all_codes, test_idx);
    return out;
  }

  if (fixed) {
    out.dictionary = *fixed;
  } else {
    auto learned = learn(train_features, nullptr, lc, schedule, init_dictionary(train_features, n_atoms, params.seed));
    out.dictionary = std::move(learned.dictionary);
    out.report = std::move(learned.report);
  }
  out.train_codes = encode(out.dictionary.atoms, train_features, nullptr, lc, schedule);
  out.test_codes = encode(out.dictionary.atoms, pixel_features(data, config, test_idx), nullptr, lc, schedule);
  if (encode_all) {
    out.all_codes = encode(out.dictionary.atoms, pixel_features(data, config, all_pixels(data.cube)), nullptr,
                           lc, schedule);
  }
  return out;
}

// ---------------------------------------------------------------------------
// reports

json report_to_json(const EvalReport& report) {
  json per_class = json::array();
  for (double a : report.per_class_accuracy) per_class.push_back(std::isnan(a) ? json(nullptr) : json(a));
  return {{"num_classes", report.num_classes},
          {"total", report.total},
          {"overall_accuracy", report.overall_accuracy},
          {"average_accuracy", report.average_accuracy},
          {"kappa", report.kappa},
          {"per_class_accuracy", per_class},
          {"confusion", report.confusion}};
}

const std::vector<std::array<unsigned char, 3>>& class_palette() {
  static const std::vector<std::array<unsigned char, 3>> palette = {
      {{230, 25, 75}},   {{60, 180, 75}},   {{255, 225, 25}}, {{0, 130, 200}},
      {{245, 130, 48}},  {{145, 30, 180}},  {{70, 240, 240}}, {{240, 50, 230}},
      {{210, 245, 60}},  {{250, 190, 212}}, {{0, 128, 128}},  {{220, 190, 255}},
      {{170, 110, 40}},  {{255, 250, 200}}, {{128, 0, 0}},    {{170, 255, 195}},
  };
  return palette;
}

void write_class_map(const fs::path& path, std::size_t height, std::size_t width,
                     const std::vector<LabelEntry>& predicted) {
  std::vector<unsigned char> pixels(height * width * 3, 0);
  const auto& palette = class_palette();
  for (const auto& e : predicted) {
    if (e.row >= height || e.col >= width || e.class_id < 1) continue;
    const auto& rgb = palette[static_cast<std::size_t>(e.class_id - 1) % palette.size()];
    std::copy(rgb.begin(), rgb.end(), pixels.begin() + static_cast<std::ptrdiff_t>((e.row * width + e.col) * 3));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidPatchWidth:
    case ErrorKind::EvenWindow:
    case ErrorKind::InvalidBinCount:
      return 2;
    case ErrorKind::Numerical:
      return 4;
    default:
      return 3;
  }
}

// ---------------------------------------------------------------------------
// commands

namespace {

SvmConfig svm_config(std::uint64_t seed) {
  SvmConfig s;
  s.seed = seed;
  return s;
}

void write_learn_report(const fs::path& path, const LearnReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  for (const auto& it : report.iterations) {
    out << json{{"iteration", it.iteration},
                {"objective", it.objective},
                {"objective_after_coding", it.objective_after_coding},
                {"fit", it.fit},
                {"atoms_replaced", it.atoms_replaced},
                {"seconds", it.seconds}}
               .dump()
        << '\n';
  }
}

bool report_is_monotone(const LearnReport& report, double rel_slack) {
  double prev = report.initial_objective;
  for (const auto& it : report.iterations) {
    for (double v : {it.objective_after_coding, it.objective}) {
      if (v > prev + rel_slack * std::abs(prev)) return false;
      prev = v;
    }
  }
  return true;
}

struct Trained {
  OvoSvmModel model;
  double C = 0.0;
  double cv_accuracy = std::numeric_limits<double>::quiet_NaN();
};

Trained train_classifier(const Matrix& codes, const std::vector<int>& labels, int num_classes,
                         const PipelineConfig& config, std::uint64_t seed, std::optional<double> fixed_c) {
  Trained t;
  if (fixed_c) {
    t.C = *fixed_c;
  } else {
    const auto cv = cross_validate(codes, labels, num_classes, config.c_grid, config.folds, seed,
                                   svm_config(seed), config.threads);
    t.C = cv.C;
    const auto pos = std::find(cv.grid.begin(), cv.grid.end(), cv.C) - cv.grid.begin();
    t.cv_accuracy = cv.mean_accuracy[static_cast<std::size_t>(pos)];
  }
  t.model = train_ovo(codes, labels, num_classes, t.C, svm_config(seed), config.threads);
  return t;
}

}  // namespace

LearnSummary cmd_learn(const PipelineConfig& config) {
  config.validate(Command::Learn);
  const Dataset data = load_dataset(config, config.seed);
  const LearnOutcome outcome =
      learn_and_encode(data, config, {config.gamma, config.atoms_frac, config.seed}, nullptr, true);

  fs::create_directories(config.out);
  save_dictionary(outcome.dictionary, config.out / "dictionary.json");
  save_codes(CodeMatrix::from_dense(outcome.all_codes), config.out / "codes.json");
  write_learn_report(config.out / "report.jsonl", outcome.report);

  LearnSummary summary;
  summary.atoms = outcome.dictionary.size();
  summary.iterations = outcome.report.iterations.size();
  summary.final_objective = outcome.report.iterations.empty() ? 0.0 : outcome.report.iterations.back().objective;
  summary.monotone = report_is_monotone(outcome.report, 1e-8);
  return summary;
}

std::vector<ClassifyRun> cmd_classify(const PipelineConfig& config) {
  config.validate(Command::Classify);
  std::optional<Dictionary> fixed;
  if (!config.dictionary.empty()) fixed = load_dictionary(config.dictionary);
  std::optional<OvoSvmModel> saved_model;
  if (!config.model.empty()) saved_model = load_model(config.model);

  fs::create_directories(config.out);
  std::vector<ClassifyRun> runs;
  json runs_json = json::array();

  for (int r = 0; r < config.repeats; ++r) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
    const Dataset data = load_dataset(config, seed);
    const auto train_labels = data.train.class_ids();
    const auto test_labels = data.test.class_ids();

    // candidate (gamma, atoms_frac) pairs; SCDL and fixed dictionaries use one
    std::vector<LearnParams> candidates;
    const bool search = config.mode != LearnMode::SCDL && !fixed &&
                        (!config.gamma_grid.empty() || !config.atoms_frac_grid.empty());
    if (search) {
      auto gammas = config.gamma_grid.empty() ? std::vector<double>{config.gamma} : config.gamma_grid;
      auto fracs = config.atoms_frac_grid.empty() ? std::vector<double>{config.atoms_frac} : config.atoms_frac_grid;
      std::sort(gammas.begin(), gammas.end());
      std::sort(fracs.begin(), fracs.end());
      for (double g : gammas)
        for (double f : fracs) candidates.push_back({g, f, seed});
    } else {
      candidates.push_back({config.gamma, config.atoms_frac, seed});
    }

    std::optional<LearnOutcome> best;
    LearnParams best_params;
    double best_cv = -1.0;
    for (const auto& params : candidates) {
      auto outcome = learn_and_encode(data, config, params, fixed ? &*fixed : nullptr);
      if (candidates.size() == 1) {
        best = std::move(outcome);
        best_params = params;
        break;
      }
      const auto cv = cross_validate(outcome.train_codes, train_labels, data.num_classes, config.c_grid,
                                     config.folds, seed, svm_config(seed), config.threads);
      const double acc = *std::max_element(cv.mean_accuracy.begin(), cv.mean_accuracy.end());
      if (acc > best_cv) {
        best_cv = acc;
        best = std::move(outcome);
        best_params = params;
      }
    }

    Trained trained;
    if (saved_model) {
      if (saved_model->num_classes != data.num_classes || saved_model->dim != best->dictionary.size()) {
        throw Error(ErrorKind::DimensionMismatch, "saved model does not match the data or dictionary");
      }
      trained.model = *saved_model;
      trained.C = saved_model->classifiers.empty() ? 0.0 : saved_model->classifiers.front().svm.C;
    } else {
      trained = train_classifier(best->train_codes, train_labels, data.num_classes, config, seed, std::nullopt);
    }

    ClassifyRun run;
    run.C = trained.C;
    run.gamma = best_params.gamma;
    run.atoms_frac = best_params.atoms_frac;
    run.test_predictions = predict_all(trained.model, best->test_codes);
    run.train_predictions = predict_all(trained.model, best->train_codes);
    run.report = evaluate(run.test_predictions, test_labels, data.num_classes);

    if (r == 0) {
      std::vector<LabelEntry> predicted;
      LabelMap test_pred;
      test_pred.num_classes = data.num_classes;
      for (std::size_t i = 0; i < data.test.entries.size(); ++i) {
        const auto& e = data.test.entries[i];
        test_pred.entries.push_back({e.row, e.col, run.test_predictions[i]});
      }
      predicted = test_pred.entries;
      for (std::size_t i = 0; i < data.train.entries.size(); ++i) {
        const auto& e = data.train.entries[i];
        predicted.push_back({e.row, e.col, run.train_predictions[i]});
      }
      {
        std::ofstream out(config.out / "predictions.csv");
        if (!out) throw Error(ErrorKind::MissingFile, "cannot write predictions.csv");
        out << "row,col,predicted\n";
        for (const auto& e : test_pred.entries) out << e.row << ',' << e.col << ',' << e.class_id << '\n';
      }
      write_class_map(config.out / "classmap.ppm", data.cube.height, data.cube.width, predicted);
      save_model(trained.model, config.out / "model.json");
      if (!fixed) save_dictionary(best->dictionary, config.out / "dictionary.json");
    }

    json rj = report_to_json(run.report);
    rj["seed"] = seed;
    rj["C"] = run.C;
    if (config.mode != LearnMode::SCDL) {
      rj["gamma"] = run.gamma;
      rj["atoms_frac"] = run.atoms_frac;
    }
    runs_json.push_back(rj);
    runs.push_back(std::move(run));
  }

  auto mean_std = [&](auto metric) {
    double mean = 0.0;
    for (const auto& r : runs) mean += metric(r.report);
    mean /= static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& r : runs) var += std::pow(metric(r.report) - mean, 2);
    const double sd = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
    return json{{"mean", mean}, {"std", sd}};
  };
  json eval = {{"mode", to_string(config.mode)},
               {"runs", runs_json},
               {"summary",
                {{"overall_accuracy", mean_std([](const EvalReport& e) { return e.overall_accuracy; })},
                 {"average_accuracy", mean_std([](const EvalReport& e) { return e.average_accuracy; })},
                 {"kappa", mean_std([](const EvalReport& e) { return e.kappa; })}}}};
  std::ofstream out(config.out / "eval.json");
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write eval.json");
  out << eval.dump(2) << '\n';
  return runs;
}

MsiSummary cmd_msi(const PipelineConfig& config) {
  config.validate(Command::Msi);
  const Dataset data = load_dataset(config, config.seed);
  std::optional<Dictionary> fixed;
  if (!config.dictionary.empty()) fixed = load_dictionary(config.dictionary);
  const LearnParams params{config.gamma, config.atoms_frac, config.seed};
  const LearnOutcome hsi = learn_and_encode(data, config, params, fixed ? &*fixed : nullptr);

  const auto train_labels = data.train.class_ids();
  const auto test_labels = data.test.class_ids();
  const auto train_idx = pixel_indices(data.cube, data.train);
  const auto test_idx = pixel_indices(data.cube, data.test);

  const Trained hsi_clf = train_classifier(hsi.train_codes, train_labels, data.num_classes, config, config.seed,
                                           std::nullopt);
  const auto hsi_report = evaluate(predict_all(hsi_clf.model, hsi.test_codes), test_labels, data.num_classes);

  const LearnConfig lc = make_learn_config(config, params, hsi.dictionary.size());
  const RegSchedule schedule{config.sigma2};
  const std::size_t bands = data.cube.active_band_count();

  fs::create_directories(config.out);
  json report = {{"mode", to_string(config.mode)}, {"hsi", report_to_json(hsi_report)}};
  report["hsi"]["C"] = hsi_clf.C;

  MsiSummary summary;
  summary.hsi_oa = hsi_report.overall_accuracy;
  for (const auto& [name, coverage] : {std::pair{"msi", BinCoverage::LowerHalf}, std::pair{"chsi", BinCoverage::Full}}) {
    const BandBinner binner = make_binner(bands, config.msi_bins, coverage);
    save_binner(binner, config.out / (std::string(name) + "_binner.json"));
    Matrix train_codes, test_codes;
    if (config.mode == LearnMode::SCDL) {
      const auto partition = partition_into_patches(data.cube.height, data.cube.width, config.patch);
      const Matrix z = apply_binner(binner, data.cube.spectra());
      const Matrix codes = code_msi(hsi.dictionary, binner, z, &partition, lc, schedule);
      train_codes = gather(codes, train_idx);
      test_codes = gather(codes, test_idx);
    } else {
      train_codes = code_msi(hsi.dictionary, binner, apply_binner(binner, data.cube.spectra(train_idx)), nullptr,
                             lc, schedule);
      test_codes = code_msi(hsi.dictionary, binner, apply_binner(binner, data.cube.spectra(test_idx)), nullptr,
                            lc, schedule);
    }
    const Trained clf = train_classifier(train_codes, train_labels, data.num_classes, config, config.seed,
                                         config.reuse_c ? std::optional<double>(hsi_clf.C) : std::nullopt);
    const auto r = evaluate(predict_all(clf.model, test_codes), test_labels, data.num_classes);
    report[name] = report_to_json(r);
    report[name]["C"] = clf.C;
    (std::string(name) == "msi" ? summary.msi_oa : summary.chsi_oa) = r.overall_accuracy;
  }

  std::ofstream out(config.out / "msi_report.json");
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write msi_report.json");
  out << report.dump(2) << '\n';
  return summary;
}

BenchSummary cmd_bench(const PipelineConfig& config) {
  config.validate(Command::Bench);
  const Dataset data = load_dataset(config, config.seed);
  const auto train_idx = pixel_indices(data.cube, data.train);
  const Matrix train_features = pixel_features(data, config, train_idx);
  const Matrix signals = config.mode == LearnMode::SCDL
                             ? data.cube.spectra()
                             : train_features;
  const auto partition = partition_into_patches(data.cube.height, data.cube.width, config.patch);
  const RegSchedule schedule{config.sigma2};
  const LearnParams params{config.gamma, config.atoms_frac, config.seed};
  const std::size_t n_atoms = atom_count(config, config.atoms_frac, train_idx.size());
  const Dictionary initial = init_dictionary(train_features, n_atoms, config.seed);

  BenchSummary summary;
  json runs = json::array();
  std::optional<LearnResult> reference;
  for (unsigned t : config.bench_threads) {
    PipelineConfig c = config;
    c.threads = t;
    c.outer_iters = config.bench_iters;
    c.outer_tol = 0.0;
    const LearnConfig lc = make_learn_config(c, params, n_atoms);
    LearnResult result = learn(signals, config.mode == LearnMode::SCDL ? &partition : nullptr, lc, schedule, initial);
    double total = 0.0;
    json seconds = json::array();
    for (const auto& it : result.report.iterations) {
      total += it.seconds;
      seconds.push_back(it.seconds);
    }
    summary.threads.push_back(t);
    summary.total_seconds.push_back(total);
    if (!reference) {
      reference = std::move(result);
    } else if (!(reference->dictionary.atoms == result.dictionary.atoms && reference->codes == result.codes)) {
      summary.identical = false;
    }
    runs.push_back({{"threads", t}, {"total_seconds", total}, {"iteration_seconds", seconds}});
  }
  for (std::size_t i = 0; i < summary.total_seconds.size(); ++i) {
    const double s = summary.total_seconds[i] > 0.0 ? summary.total_seconds.front() / summary.total_seconds[i] : 0.0;
    summary.speedup.push_back(s);
    runs[i]["speedup"] = s;
  }

  fs::create_directories(config.out);
  std::ofstream out(config.out / "bench.json");
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write bench.json");
  out << json{{"mode", to_string(config.mode)},
              {"atoms", n_atoms},
              {"iterations", config.bench_iters},
              {"identical_across_threads", summary.identical},
              {"runs", runs}}
             .dump(2)
      << '\n';
  return summary;
}

}  // namespace hsidl
