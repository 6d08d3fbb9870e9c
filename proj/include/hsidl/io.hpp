#pragma once

#include "hsidl/types.hpp"

#include <cstdint>
#include <filesystem>
#include <utility>

namespace hsidl {

// All binary payloads are little-endian. Headers are JSON objects whose
// "data" field names the payload relative to the header's directory.

HsiCube load_cube(const std::filesystem::path& header_path);
void save_cube(const HsiCube& cube, const std::filesystem::path& header_path);

/// Parses "row,col,class_id" lines after a one-line header. Bounds are
/// checked against the cube dimensions.
LabelMap load_labels(const std::filesystem::path& csv_path, std::size_t height, std::size_t width);
void save_labels(const LabelMap& labels, const std::filesystem::path& csv_path);

/// Stratified split: ceil(fraction * count) samples per class go to train,
/// with at least one sample of every class on each side.
std::pair<LabelMap, LabelMap> split_labels(const LabelMap& labels, double fraction,
                                           std::uint64_t seed);

/// Atom-major f32 payload (atom 0's B values, then atom 1, ...).
void save_dictionary(const Dictionary& dict, const std::filesystem::path& header_path);
Dictionary load_dictionary(const std::filesystem::path& header_path);

/// Payload of nnz records (u32 sample, u32 atom, f32 value).
void save_codes(const CodeMatrix& codes, const std::filesystem::path& header_path);
CodeMatrix load_codes(const std::filesystem::path& header_path);

}  // namespace hsidl
