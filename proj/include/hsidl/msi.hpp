#pragma once

#include "hsidl/dictionary_learning.hpp"
#include "hsidl/types.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace hsidl {

/// Sums contiguous band ranges [start, end) into b output channels.
struct BandBinner {
  std::size_t input_bands = 0;
  std::vector<std::pair<std::size_t, std::size_t>> bin_ranges;

  std::size_t bins() const { return bin_ranges.size(); }
  void validate() const;
  /// b x B matrix with one contiguous block of ones per row.
  Matrix matrix() const;
};

enum class BinCoverage { LowerHalf, Full };

/// b equal bins over [0, floor(B/2)) or [0, B); leftover bands go to the
/// last bin.
BandBinner make_binner(std::size_t bands, std::size_t bins, BinCoverage coverage);

/// One bin per band.
BandBinner identity_binner(std::size_t bands);

/// b x N output; row i is the sum of the input rows in bin i.
Matrix apply_binner(const BandBinner& binner, const Matrix& spectra);

void save_binner(const BandBinner& binner, const std::filesystem::path& path);
BandBinner load_binner(const std::filesystem::path& path);

/// Codes low-resolution samples against the binned dictionary (no atom
/// norm constraint is re-imposed on it). SDL codes are nonnegative;
/// `config.mode` selects per-sample Lasso or grouped coding.
Matrix code_msi(const Dictionary& dictionary, const BandBinner& binner, const Matrix& measurements,
                const GroupPartition* partition, const LearnConfig& config, const RegSchedule& schedule);

}  // namespace hsidl
