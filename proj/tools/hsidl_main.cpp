// Command-line front end for spectral / contextual / spectral-contextual
// dictionary learning and classification of hyperspectral cubes.

#include "hsidl/error.hpp"
#include "hsidl/io.hpp"
#include "hsidl/pipeline.hpp"
#include "hsidl/synthetic.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace {

using namespace hsidl;

struct Overrides {
  std::optional<std::string> config, cube, labels, mode, out, dictionary, model, solver, moments;
  std::optional<std::size_t> patch, window, atoms;
  std::optional<double> atoms_frac, sigma2, gamma, train_fraction;
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats, outer_iters;
  bool reuse_c = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON configuration file");
    app->add_option("--cube", cube, "cube header (JSON)");
    app->add_option("--labels", labels, "label CSV (row,col,class)");
    app->add_option("--train-fraction", train_fraction, "stratified training fraction");
    app->add_option("--mode", mode, "SDL | CDL | SCDL");
    app->add_option("--patch", patch, "SCDL patch side");
    app->add_option("--window", window, "CDL window side (odd)");
    app->add_option("--moments", moments, "CDL features: mean | mean_std");
    app->add_option("--atoms", atoms, "dictionary size (overrides --atoms-frac)");
    app->add_option("--atoms-frac", atoms_frac, "dictionary size as a fraction of the training set");
    app->add_option("--sigma2", sigma2, "SCDL noise variance");
    app->add_option("--gamma", gamma, "SDL/CDL sparsity weight");
    app->add_option("--solver", solver, "mfocuss | bcd");
    app->add_option("--outer-iters", outer_iters, "dictionary learning iterations");
    app->add_option("--threads", threads, "worker threads");
    app->add_option("--seed", seed, "random seed");
    app->add_option("--repeats", repeats, "independent runs (seed, seed+1, ...)");
    app->add_option("--dictionary", dictionary, "use a saved dictionary instead of learning");
    app->add_option("--model", model, "use a saved SVM model instead of training");
    app->add_flag("--reuse-c", reuse_c, "msi: reuse the HSI-level C");
    app->add_option("--out", out, "output directory");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config ? load_config(*config) : PipelineConfig{};
    nlohmann::json j = nlohmann::json::object();
    if (cube) j["cube"] = *cube;
    if (labels) j["labels"] = *labels;
    if (train_fraction) j["train_fraction"] = *train_fraction;
    if (mode) j["mode"] = *mode;
    if (patch) j["patch"] = *patch;
    if (window) j["window"] = *window;
    if (moments) j["moments"] = *moments;
    if (atoms) j["atoms"] = *atoms;
    if (atoms_frac) j["atoms_frac"] = *atoms_frac;
    if (sigma2) j["sigma2"] = *sigma2;
    if (gamma) j["gamma"] = *gamma;
    if (solver) j["solver"] = *solver;
    if (outer_iters) j["outer_iters"] = *outer_iters;
    if (threads) j["threads"] = *threads;
    if (seed) j["seed"] = *seed;
    if (repeats) j["repeats"] = *repeats;
    if (dictionary) j["dictionary"] = *dictionary;
    if (model) j["model"] = *model;
    if (reuse_c) j["reuse_c"] = true;
    if (out) j["out"] = *out;
    return config_from_json(j, c);
  }
};

int run_synth(const SceneSpec& spec, const std::string& out_dir) {
  const auto scene = make_scene(spec);
  std::filesystem::create_directories(out_dir);
  save_cube(scene.cube, std::filesystem::path(out_dir) / "cube.json");
  save_labels(scene.labels, std::filesystem::path(out_dir) / "labels.csv");
  std::cout << "wrote " << out_dir << "/cube.json and labels.csv (" << spec.height << "x" << spec.width << "x"
            << spec.bands << ", " << spec.classes << " classes, noise std " << scene.noise_std << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial-aware dictionary learning for hyperspectral classification"};
  app.require_subcommand(1);

  Overrides learn_o, classify_o, msi_o, bench_o;
  auto* learn_cmd = app.add_subcommand("learn", "learn a dictionary and code every pixel");
  learn_o.attach(learn_cmd);
  auto* classify_cmd = app.add_subcommand("classify", "code, train the one-vs-one SVM, and evaluate");
  classify_o.attach(classify_cmd);
  auto* msi_cmd = app.add_subcommand("msi", "classify simulated multispectral and coarse measurements");
  msi_o.attach(msi_cmd);
  auto* bench_cmd = app.add_subcommand("bench", "time dictionary learning at several thread counts");
  bench_o.attach(bench_cmd);

  SceneSpec scene;
  std::string synth_out = "synthetic";
  auto* synth_cmd = app.add_subcommand("synth", "write a labeled synthetic scene");
  synth_cmd->add_option("--height", scene.height);
  synth_cmd->add_option("--width", scene.width);
  synth_cmd->add_option("--bands", scene.bands);
  synth_cmd->add_option("--classes", scene.classes);
  synth_cmd->add_option("--block", scene.block, "side of the class tiles");
  synth_cmd->add_option("--snr", scene.snr_db, "signal-to-noise ratio in dB");
  synth_cmd->add_option("--seed", scene.seed);
  synth_cmd->add_option("--out", synth_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) return run_synth(scene, synth_out);

    if (*learn_cmd) {
      const auto config = learn_o.resolve();
      const auto s = cmd_learn(config);
      std::cout << "learned " << s.atoms << " atoms in " << s.iterations << " iterations, objective "
                << s.final_objective << (s.monotone ? "" : " (WARNING: objective increased)") << "\n"
                << "outputs in " << config.out.string() << "\n";
      return 0;
    }
    if (*classify_cmd) {
      const auto config = classify_o.resolve();
      const auto runs = cmd_classify(config);
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i].report;
        std::printf("run %zu: OA %.4f  AA %.4f  kappa %.4f  (C=%g)\n", i, r.overall_accuracy, r.average_accuracy,
                    r.kappa, runs[i].C);
      }
      std::cout << "outputs in " << config.out.string() << "\n";
      return 0;
    }
    if (*msi_cmd) {
      const auto config = msi_o.resolve();
      const auto s = cmd_msi(config);
      std::printf("OA  HSI %.4f  MSI %.4f  cHSI %.4f\n", s.hsi_oa, s.msi_oa, s.chsi_oa);
      return 0;
    }
    if (*bench_cmd) {
      const auto config = bench_o.resolve();
      const auto s = cmd_bench(config);
      for (std::size_t i = 0; i < s.threads.size(); ++i) {
        std::printf("threads %u: %.3f s  speedup %.2f\n", s.threads[i], s.total_seconds[i], s.speedup[i]);
      }
      std::cout << (s.identical ? "results identical across thread counts\n"
                                : "WARNING: results differ across thread counts\n");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
