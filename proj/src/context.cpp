#include "hsidl/context.hpp"

#include "hsidl/error.hpp"

#include <algorithm>
#include <cmath>

namespace hsidl {

GroupPartition partition_into_patches(std::size_t height, std::size_t width, std::size_t w) {
  if (w == 0) throw Error(ErrorKind::InvalidPatchWidth, "patch width must be at least 1");
  GroupPartition part;
  part.height = height;
  part.width = width;
  part.patch_width = w;
  for (std::size_t r0 = 0; r0 < height; r0 += w) {
    for (std::size_t c0 = 0; c0 < width; c0 += w) {
      std::vector<std::size_t> members;
      const std::size_t r1 = std::min(height, r0 + w);
      const std::size_t c1 = std::min(width, c0 + w);
      members.reserve((r1 - r0) * (c1 - c0));
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) members.push_back(r * width + c);
      part.groups.push_back(std::move(members));
    }
  }
  return part;
}

GroupPartition singleton_partition(std::size_t height, std::size_t width) {
  return partition_into_patches(height, width, 1);
}

ContextFeatures window_moments(const HsiCube& cube, const std::vector<PixelCoord>& centers,
                               std::size_t w, MomentOrder order) {
  if (w == 0 || w % 2 == 0) throw Error(ErrorKind::EvenWindow, "window side must be odd and >= 1");
  if (centers.empty()) throw Error(ErrorKind::EmptyCenters, "no window centers given");

  const auto bands = cube.active_bands();
  const std::size_t nb = bands.size();
  const std::size_t plane = cube.height * cube.width;
  const std::size_t half = w / 2;

  ContextFeatures out;
  out.n_samples = centers.size();
  out.dim = order == MomentOrder::MeanOnly ? nb : 2 * nb;
  out.values.resize(static_cast<Eigen::Index>(out.dim), static_cast<Eigen::Index>(centers.size()));

  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto [row, col] = centers[i];
    if (row >= cube.height || col >= cube.width) {
      throw Error(ErrorKind::OutOfBounds, "window center outside the cube", i);
    }
    const std::size_t r0 = row >= half ? row - half : 0;
    const std::size_t c0 = col >= half ? col - half : 0;
    const std::size_t r1 = std::min(cube.height, row + half + 1);
    const std::size_t c1 = std::min(cube.width, col + half + 1);
    const double count = static_cast<double>((r1 - r0) * (c1 - c0));

    for (std::size_t b = 0; b < nb; ++b) {
      const float* band = cube.values.data() + bands[b] * plane;
      double sum = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) sum += band[r * cube.width + c];
      const double mean = sum / count;
      out.values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = mean;
      if (order == MomentOrder::MeanAndStd) {
        double ss = 0.0;
        for (std::size_t r = r0; r < r1; ++r) {
          for (std::size_t c = c0; c < c1; ++c) {
            const double d = band[r * cube.width + c] - mean;
            ss += d * d;
          }
        }
        out.values(static_cast<Eigen::Index>(nb + b), static_cast<Eigen::Index>(i)) = std::sqrt(ss / count);
      }
    }
  }
  return out;
}

}  // namespace hsidl
