#pragma once

#include "hsidl/types.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace hsidl {

/// Disjoint cover of the H*W pixel indices by axis-aligned rectangles.
struct GroupPartition {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t patch_width = 0;
  std::vector<std::vector<std::size_t>> groups;

  std::size_t pixel_count() const { return height * width; }
};

/// Non-overlapping w x w patches in row-major patch order; patches on the
/// right and bottom edges are clipped to the image.
GroupPartition partition_into_patches(std::size_t height, std::size_t width, std::size_t w);

/// Every pixel in its own group.
GroupPartition singleton_partition(std::size_t height, std::size_t width);

enum class MomentOrder { MeanOnly, MeanAndStd };

struct ContextFeatures {
  std::size_t n_samples = 0;
  std::size_t dim = 0;
  Matrix values;  // dim x n_samples
};

using PixelCoord = std::pair<std::size_t, std::size_t>;

/// Per-band mean (and population standard deviation) over the w x w window
/// centered at each pixel, clipped to the image bounds.
ContextFeatures window_moments(const HsiCube& cube, const std::vector<PixelCoord>& centers,
                               std::size_t w, MomentOrder order);

}  // namespace hsidl
