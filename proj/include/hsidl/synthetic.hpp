#pragma once

#include "hsidl/context.hpp"
#include "hsidl/types.hpp"

#include <cstdint>
#include <vector>

namespace hsidl {

/// Grouped linear mixtures X = D* Y* + noise where every group's columns
/// share one random support.
struct PlantedModel {
  Matrix dictionary;  // B x K, unit-norm atoms
  Matrix codes;       // K x N
  Matrix signals;     // B x N
  GroupPartition partition;
};

struct PlantedSpec {
  std::size_t bands = 16;
  std::size_t atoms = 20;
  std::size_t groups = 50;
  std::size_t group_size = 8;
  std::size_t support = 3;
  double coef_min = 0.5;
  double coef_max = 1.5;
  double noise_std = 0.01;
  std::uint64_t seed = 1;
};

PlantedModel make_planted_model(const PlantedSpec& spec);

/// Labeled scene whose classes are mixtures of disjoint atom sets. Classes
/// are laid out as a checkerboard of block x block tiles.
struct SceneSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t bands = 16;
  int classes = 2;
  std::size_t atoms_per_class = 3;
  std::size_t block = 8;
  double snr_db = 20.0;
  double coef_min = 0.5;
  double coef_max = 1.5;
  // Overall amplitude; reflectance cubes are commonly stored in the
  // thousands, which is the range the default sigma2 = 10 schedule suits.
  double scale = 1000.0;
  std::uint64_t seed = 1;
};

struct SyntheticScene {
  HsiCube cube;
  LabelMap labels;        // every pixel, row-major
  Matrix endmembers;      // B x (classes * atoms_per_class), smooth positive spectra
  Matrix clean;           // B x N noise-free spectra
  double noise_std = 0.0;
};

SyntheticScene make_scene(const SceneSpec& spec);

/// Smooth positive unit-norm spectra made of Gaussian bumps.
Matrix smooth_spectra(std::size_t bands, std::size_t count, std::uint64_t seed);

}  // namespace hsidl
