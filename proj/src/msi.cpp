#include "hsidl/msi.hpp"

#include "hsidl/error.hpp"

#include <json.hpp>

#include <fstream>
#include <string>

namespace hsidl {

using json = nlohmann::json;

void BandBinner::validate() const {
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < bin_ranges.size(); ++i) {
    const auto [start, end] = bin_ranges[i];
    if (start >= end || end > input_bands || start < prev_end) {
      throw Error(ErrorKind::RangeOutOfBounds,
                  "bin " + std::to_string(i) + " [" + std::to_string(start) + ", " + std::to_string(end) +
                      ") is empty, overlapping, or outside " + std::to_string(input_bands) + " bands",
                  i);
    }
    prev_end = end;
  }
}

Matrix BandBinner::matrix() const {
  validate();
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(bins()), static_cast<Eigen::Index>(input_bands));
  for (std::size_t i = 0; i < bin_ranges.size(); ++i) {
    for (std::size_t b = bin_ranges[i].first; b < bin_ranges[i].second; ++b) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = 1.0;
    }
  }
  return m;
}

BandBinner make_binner(std::size_t bands, std::size_t bins, BinCoverage coverage) {
  const std::size_t covered = coverage == BinCoverage::LowerHalf ? bands / 2 : bands;
  if (bins == 0 || bins > covered) {
    throw Error(ErrorKind::InvalidBinCount,
                std::to_string(bins) + " bins over " + std::to_string(covered) + " bands");
  }
  BandBinner binner;
  binner.input_bands = bands;
  const std::size_t width = covered / bins;
  for (std::size_t i = 0; i < bins; ++i) {
    const std::size_t start = i * width;
    const std::size_t end = i + 1 == bins ? covered : start + width;
    binner.bin_ranges.emplace_back(start, end);
  }
  return binner;
}

BandBinner identity_binner(std::size_t bands) {
  BandBinner binner;
  binner.input_bands = bands;
  for (std::size_t b = 0; b < bands; ++b) binner.bin_ranges.emplace_back(b, b + 1);
  return binner;
}

Matrix apply_binner(const BandBinner& binner, const Matrix& spectra) {
  binner.validate();
  if (static_cast<std::size_t>(spectra.rows()) != binner.input_bands) {
    throw Error(ErrorKind::RangeOutOfBounds, "binner expects " + std::to_string(binner.input_bands) +
                                                 " bands, got " + std::to_string(spectra.rows()));
  }
  Matrix out(static_cast<Eigen::Index>(binner.bins()), spectra.cols());
  for (std::size_t i = 0; i < binner.bins(); ++i) {
    const auto [start, end] = binner.bin_ranges[i];
    // start from the first band so single-band bins copy values exactly
    auto row = out.row(static_cast<Eigen::Index>(i));
    row = spectra.row(static_cast<Eigen::Index>(start));
    for (std::size_t b = start + 1; b < end; ++b) row += spectra.row(static_cast<Eigen::Index>(b));
  }
  return out;
}

void save_binner(const BandBinner& binner, const std::filesystem::path& path) {
  json j;
  j["input_bands"] = binner.input_bands;
  j["bins"] = json::array();
  for (const auto& [start, end] : binner.bin_ranges) j["bins"].push_back({start, end});
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

BandBinner load_binner(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  BandBinner binner;
  try {
    const json j = json::parse(in);
    binner.input_bands = j.at("input_bands").get<std::size_t>();
    for (const auto& r : j.at("bins")) {
      binner.bin_ranges.emplace_back(r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::HeaderParse, path.string() + ": " + e.what());
  }
  binner.validate();
  return binner;
}

Matrix code_msi(const Dictionary& dictionary, const BandBinner& binner, const Matrix& measurements,
                const GroupPartition* partition, const LearnConfig& config, const RegSchedule& schedule) {
  const Matrix effective = apply_binner(binner, dictionary.atoms);
  if (measurements.rows() != effective.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "measurements do not match the binner output size");
  }
  LearnConfig coding = config;
  if (coding.mode == LearnMode::SDL) coding.nonneg = true;
  return encode(effective, measurements, partition, coding, schedule);
}

}  // namespace hsidl
