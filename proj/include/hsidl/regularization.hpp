#pragma once

#include <cstddef>

namespace hsidl {

/// Group weight from the row-sparsity prior: with q = |G| and
/// lambda = sqrt(|G|), gamma = sigma2 * lambda * (1/q + 1).
double compute_gamma(double sigma2, std::size_t group_size);

/// Per-group regularization schedule. Groups of equal size get equal
/// weights; gamma / sqrt(|G|) decreases toward sigma2 as |G| grows.
struct RegSchedule {
  double sigma2 = 10.0;

  double gamma(std::size_t group_size) const { return compute_gamma(sigma2, group_size); }
};

}  // namespace hsidl
