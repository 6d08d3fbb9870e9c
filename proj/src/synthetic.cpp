#include "hsidl/synthetic.hpp"

#include "hsidl/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hsidl {

PlantedModel make_planted_model(const PlantedSpec& spec) {
  if (spec.support > spec.atoms || spec.group_size == 0 || spec.groups == 0) {
    throw Error(ErrorKind::InvalidArgument, "inconsistent planted model dimensions");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> coef(spec.coef_min, spec.coef_max);

  const auto B = static_cast<Eigen::Index>(spec.bands);
  const auto K = static_cast<Eigen::Index>(spec.atoms);
  const std::size_t n = spec.groups * spec.group_size;

  PlantedModel model;
  model.dictionary.resize(B, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index b = 0; b < B; ++b) model.dictionary(b, k) = normal(rng);
    model.dictionary.col(k).normalize();
  }

  model.codes = Matrix::Zero(K, static_cast<Eigen::Index>(n));
  std::vector<std::size_t> atoms(spec.atoms);
  std::iota(atoms.begin(), atoms.end(), 0);
  for (std::size_t g = 0; g < spec.groups; ++g) {
    std::shuffle(atoms.begin(), atoms.end(), rng);
    for (std::size_t m = 0; m < spec.group_size; ++m) {
      const auto col = static_cast<Eigen::Index>(g * spec.group_size + m);
      for (std::size_t s = 0; s < spec.support; ++s) {
        model.codes(static_cast<Eigen::Index>(atoms[s]), col) = coef(rng);
      }
    }
  }

  model.signals = model.dictionary * model.codes;
  for (Eigen::Index i = 0; i < model.signals.size(); ++i) model.signals.data()[i] += spec.noise_std * normal(rng);

  // one image row of groups, each a 1 x group_size patch
  model.partition = partition_into_patches(1, n, spec.group_size);
  return model;
}

Matrix smooth_spectra(std::size_t bands, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(bands), static_cast<Eigen::Index>(count));
  const double span = static_cast<double>(bands);
  for (std::size_t k = 0; k < count; ++k) {
    const double c1 = unit(rng) * span, c2 = unit(rng) * span;
    const double w1 = (0.05 + 0.15 * unit(rng)) * span, w2 = (0.05 + 0.15 * unit(rng)) * span;
    const double a2 = 0.3 + 0.7 * unit(rng);
    const double base = 0.05 * unit(rng);
    for (std::size_t b = 0; b < bands; ++b) {
      const double t = static_cast<double>(b);
      out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) =
          base + std::exp(-0.5 * std::pow((t - c1) / w1, 2)) + a2 * std::exp(-0.5 * std::pow((t - c2) / w2, 2));
    }
    out.col(static_cast<Eigen::Index>(k)).normalize();
  }
  return out;
}

SyntheticScene make_scene(const SceneSpec& spec) {
  if (spec.classes < 1 || spec.atoms_per_class == 0 || spec.block == 0 || spec.height == 0 || spec.width == 0) {
    throw Error(ErrorKind::InvalidArgument, "inconsistent scene specification");
  }
  SyntheticScene scene;
  const std::size_t n_end = static_cast<std::size_t>(spec.classes) * spec.atoms_per_class;
  scene.endmembers = smooth_spectra(spec.bands, n_end, spec.seed);

  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> coef(spec.coef_min, spec.coef_max);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = spec.height * spec.width;
  scene.clean.resize(static_cast<Eigen::Index>(spec.bands), static_cast<Eigen::Index>(n));
  scene.labels.num_classes = spec.classes;
  for (std::size_t r = 0; r < spec.height; ++r) {
    for (std::size_t c = 0; c < spec.width; ++c) {
      const int cls = static_cast<int>((r / spec.block + c / spec.block) % static_cast<std::size_t>(spec.classes)) + 1;
      scene.labels.entries.push_back({r, c, cls});
      const auto col = static_cast<Eigen::Index>(r * spec.width + c);
      scene.clean.col(col).setZero();
      for (std::size_t a = 0; a < spec.atoms_per_class; ++a) {
        const auto atom = static_cast<Eigen::Index>(static_cast<std::size_t>(cls - 1) * spec.atoms_per_class + a);
        scene.clean.col(col) += spec.scale * coef(rng) * scene.endmembers.col(atom);
      }
    }
  }

  const double signal_power = scene.clean.squaredNorm() / static_cast<double>(scene.clean.size());
  scene.noise_std = std::sqrt(signal_power / std::pow(10.0, spec.snr_db / 10.0));

  scene.cube.height = spec.height;
  scene.cube.width = spec.width;
  scene.cube.bands = spec.bands;
  scene.cube.values.resize(n * spec.bands);
  for (std::size_t b = 0; b < spec.bands; ++b) {
    for (std::size_t p = 0; p < n; ++p) {
      const double v = scene.clean(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(p)) + scene.noise_std * normal(rng);
      scene.cube.values[b * n + p] = static_cast<float>(v);
    }
  }
  return scene;
}

}  // namespace hsidl
