#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace hsidl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// H x W x B reflectance volume stored band-sequential (one full row-major
/// band plane after another). Pixel (r, c) has flat pixel index r * W + c.
struct HsiCube {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t bands = 0;
  std::vector<float> values;
  // Retained band indices (0-based into the stored bands). Empty means all.
  std::vector<std::size_t> band_mask;

  std::size_t pixels() const { return height * width; }
  std::size_t pixel_index(std::size_t row, std::size_t col) const { return row * width + col; }

  float at(std::size_t row, std::size_t col, std::size_t band) const {
    return values[band * height * width + row * width + col];
  }

  /// Bands seen by the algorithms: the band mask when present, else all.
  std::vector<std::size_t> active_bands() const;
  std::size_t active_band_count() const;

  /// B' x N matrix of spectra over the active bands, one column per pixel.
  Matrix spectra() const;
  /// Spectra of the given flat pixel indices, in order.
  Matrix spectra(const std::vector<std::size_t>& pixel_indices) const;
};

struct LabelEntry {
  std::size_t row = 0;
  std::size_t col = 0;
  int class_id = 0;

  friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

struct LabelMap {
  std::vector<LabelEntry> entries;
  int num_classes = 0;

  std::vector<int> class_ids() const;
};

/// B x K matrix of atoms, each column inside the unit l2 ball.
struct Dictionary {
  Matrix atoms;

  std::size_t bands() const { return static_cast<std::size_t>(atoms.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(atoms.cols()); }
  /// Largest atom norm; used to check the unit-ball constraint.
  double max_atom_norm() const;
};

inline constexpr double kAtomNormSlack = 1e-12;

struct CodeEntry {
  std::uint32_t sample = 0;
  std::uint32_t atom = 0;
  float value = 0.0f;

  friend bool operator==(const CodeEntry&, const CodeEntry&) = default;
};

/// Sparse K x N coefficient matrix as (sample, atom, value) triplets sorted
/// by (sample, atom).
class CodeMatrix {
 public:
  CodeMatrix() = default;
  CodeMatrix(std::size_t atoms, std::size_t n_samples, std::vector<CodeEntry> entries);

  /// Keeps every entry whose single-precision value is nonzero.
  static CodeMatrix from_dense(const Matrix& dense);

  std::size_t atoms() const { return atoms_; }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t nnz() const { return entries_.size(); }
  const std::vector<CodeEntry>& entries() const { return entries_; }

  Matrix to_dense() const;
  /// Dense K x |samples| matrix of the chosen columns, in order.
  Matrix columns(const std::vector<std::size_t>& samples) const;

  friend bool operator==(const CodeMatrix&, const CodeMatrix&) = default;

 private:
  std::size_t atoms_ = 0;
  std::size_t n_samples_ = 0;
  std::vector<CodeEntry> entries_;
};

}  // namespace hsidl
