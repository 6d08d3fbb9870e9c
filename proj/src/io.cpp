#include "hsidl/io.hpp"

#include "hsidl/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace hsidl {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "payload readers assume a little-endian host");

namespace {

json read_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  try {
    json header = json::parse(in);
    if (!header.is_object()) throw Error(ErrorKind::HeaderParse, path.string() + ": not an object");
    return header;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::HeaderParse, path.string() + ": " + e.what());
  }
}

template <typename T>
T header_field(const json& header, const char* key, const fs::path& path) {
  try {
    return header.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::HeaderParse, path.string() + ": field '" + key + "': " + e.what());
  }
}

fs::path payload_path(const json& header, const fs::path& header_path) {
  return header_path.parent_path() / header_field<std::string>(header, "data", header_path);
}

std::string read_payload(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

void write_file(const fs::path& path, const json& header) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out << header.dump(2) << '\n';
}

void write_payload(const fs::path& path, const void* data, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

std::vector<float> decode_floats(const std::string& bytes, std::size_t expected,
                                 const fs::path& path) {
  if (bytes.size() != expected * sizeof(float)) {
    throw Error(ErrorKind::SizeMismatch, path.string() + ": expected " +
                                             std::to_string(expected * sizeof(float)) +
                                             " bytes, found " + std::to_string(bytes.size()));
  }
  std::vector<float> values(expected);
  std::memcpy(values.data(), bytes.data(), bytes.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::NonFiniteValue, path.string() + ": value " + std::to_string(i), i);
    }
  }
  return values;
}

fs::path sibling_payload(const fs::path& header_path) {
  fs::path data = header_path.filename();
  data.replace_extension(".bin");
  return data;
}

}  // namespace

// ---------------------------------------------------------------------------
// types

std::vector<std::size_t> HsiCube::active_bands() const {
  if (!band_mask.empty()) return band_mask;
  std::vector<std::size_t> all(bands);
  for (std::size_t b = 0; b < bands; ++b) all[b] = b;
  return all;
}

std::size_t HsiCube::active_band_count() const {
  return band_mask.empty() ? bands : band_mask.size();
}

Matrix HsiCube::spectra() const {
  std::vector<std::size_t> all(pixels());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return spectra(all);
}

Matrix HsiCube::spectra(const std::vector<std::size_t>& pixel_indices) const {
  const auto used = active_bands();
  const std::size_t plane = height * width;
  Matrix out(static_cast<Eigen::Index>(used.size()), static_cast<Eigen::Index>(pixel_indices.size()));
  for (std::size_t j = 0; j < pixel_indices.size(); ++j) {
    for (std::size_t b = 0; b < used.size(); ++b) {
      out(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j)) =
          values[used[b] * plane + pixel_indices[j]];
    }
  }
  return out;
}

std::vector<int> LabelMap::class_ids() const {
  std::vector<int> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.class_id);
  return ids;
}

double Dictionary::max_atom_norm() const {
  return atoms.cols() == 0 ? 0.0 : atoms.colwise().norm().maxCoeff();
}

CodeMatrix::CodeMatrix(std::size_t atoms, std::size_t n_samples, std::vector<CodeEntry> entries)
    : atoms_(atoms), n_samples_(n_samples), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.sample >= n_samples_ || e.atom >= atoms_) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "code record " + std::to_string(i) + " (sample " + std::to_string(e.sample) +
                      ", atom " + std::to_string(e.atom) + ")",
                  i);
    }
    if (!std::isfinite(e.value)) {
      throw Error(ErrorKind::NonFiniteValue, "code record " + std::to_string(i), i);
    }
  }
  auto key = [](const CodeEntry& e) { return std::pair(e.sample, e.atom); };
  std::stable_sort(entries_.begin(), entries_.end(),
                   [&](const CodeEntry& a, const CodeEntry& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    if (key(entries_[i]) == key(entries_[i - 1])) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "duplicate code entry (sample " + std::to_string(entries_[i].sample) +
                      ", atom " + std::to_string(entries_[i].atom) + ")",
                  i);
    }
  }
}

CodeMatrix CodeMatrix::from_dense(const Matrix& dense) {
  std::vector<CodeEntry> entries;
  for (Eigen::Index n = 0; n < dense.cols(); ++n) {
    for (Eigen::Index k = 0; k < dense.rows(); ++k) {
      const auto v = static_cast<float>(dense(k, n));
      if (v != 0.0f) {
        entries.push_back({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(k), v});
      }
    }
  }
  return CodeMatrix(static_cast<std::size_t>(dense.rows()), static_cast<std::size_t>(dense.cols()),
                    std::move(entries));
}

Matrix CodeMatrix::to_dense() const {
  Matrix dense = Matrix::Zero(static_cast<Eigen::Index>(atoms_), static_cast<Eigen::Index>(n_samples_));
  for (const auto& e : entries_) dense(e.atom, e.sample) = static_cast<double>(e.value);
  return dense;
}

Matrix CodeMatrix::columns(const std::vector<std::size_t>& samples) const {
  // entries are sorted by sample, so each column is a contiguous run
  std::vector<std::size_t> start(n_samples_ + 1, 0);
  for (const auto& e : entries_) ++start[e.sample + 1];
  for (std::size_t i = 0; i < n_samples_; ++i) start[i + 1] += start[i];

  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(atoms_), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j] >= n_samples_) {
      throw Error(ErrorKind::IndexOutOfRange, "sample " + std::to_string(samples[j]), samples[j]);
    }
    for (std::size_t p = start[samples[j]]; p < start[samples[j] + 1]; ++p) {
      out(entries_[p].atom, static_cast<Eigen::Index>(j)) = static_cast<double>(entries_[p].value);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// cube

HsiCube load_cube(const fs::path& header_path) {
  const json header = read_header(header_path);
  HsiCube cube;
  cube.height = header_field<std::size_t>(header, "height", header_path);
  cube.width = header_field<std::size_t>(header, "width", header_path);
  cube.bands = header_field<std::size_t>(header, "bands", header_path);
  if (header.contains("dtype") && header["dtype"] != "f32") {
    throw Error(ErrorKind::HeaderParse, header_path.string() + ": dtype must be \"f32\"");
  }
  if (header.contains("interleave") && header["interleave"] != "bsq") {
    throw Error(ErrorKind::HeaderParse, header_path.string() + ": interleave must be \"bsq\"");
  }
  if (header.contains("band_mask")) {
    cube.band_mask = header_field<std::vector<std::size_t>>(header, "band_mask", header_path);
    std::set<std::size_t> seen;
    for (auto b : cube.band_mask) {
      if (b >= cube.bands || !seen.insert(b).second) {
        throw Error(ErrorKind::HeaderParse,
                    header_path.string() + ": band_mask entry " + std::to_string(b) +
                        " is out of range or repeated");
      }
    }
  }
  const auto payload = payload_path(header, header_path);
  cube.values = decode_floats(read_payload(payload), cube.height * cube.width * cube.bands, payload);
  return cube;
}

void save_cube(const HsiCube& cube, const fs::path& header_path) {
  if (cube.values.size() != cube.height * cube.width * cube.bands) {
    throw Error(ErrorKind::SizeMismatch, "cube values do not match its dimensions");
  }
  const auto data = sibling_payload(header_path);
  json header = {{"height", cube.height}, {"width", cube.width}, {"bands", cube.bands},
                 {"dtype", "f32"},        {"interleave", "bsq"}, {"data", data.string()}};
  if (!cube.band_mask.empty()) header["band_mask"] = cube.band_mask;
  write_payload(header_path.parent_path() / data, cube.values.data(),
                cube.values.size() * sizeof(float));
  write_file(header_path, header);
}

// ---------------------------------------------------------------------------
// labels

LabelMap load_labels(const fs::path& csv_path, std::size_t height, std::size_t width) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorKind::MissingFile, csv_path.string());

  LabelMap labels;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    long long row = 0, col = 0, cls = 0;
    char c1 = 0, c2 = 0;
    std::istringstream fields(line);
    if (!(fields >> row >> c1 >> col >> c2 >> cls) || c1 != ',' || c2 != ',' ||
        !(fields >> std::ws).eof() || cls < 1) {
      throw Error(ErrorKind::ParseError, csv_path.string() + " line " + std::to_string(line_no),
                  line_no);
    }
    if (row < 0 || col < 0 || static_cast<std::size_t>(row) >= height ||
        static_cast<std::size_t>(col) >= width) {
      throw Error(ErrorKind::OutOfBounds, csv_path.string() + " line " + std::to_string(line_no),
                  line_no);
    }
    const auto r = static_cast<std::size_t>(row);
    const auto c = static_cast<std::size_t>(col);
    if (!seen.emplace(r, c).second) {
      throw Error(ErrorKind::DuplicateCoordinate,
                  csv_path.string() + " line " + std::to_string(line_no), line_no);
    }
    labels.entries.push_back({r, c, static_cast<int>(cls)});
    labels.num_classes = std::max(labels.num_classes, static_cast<int>(cls));
  }
  return labels;
}

void save_labels(const LabelMap& labels, const fs::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + csv_path.string());
  out << "row,col,class\n";
  for (const auto& e : labels.entries) out << e.row << ',' << e.col << ',' << e.class_id << '\n';
}

std::pair<LabelMap, LabelMap> split_labels(const LabelMap& labels, double fraction,
                                           std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "split fraction must lie in (0, 1)");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.entries.size(); ++i) {
    by_class[labels.entries[i].class_id].push_back(i);
  }

  std::mt19937_64 rng(seed);
  std::vector<char> in_train(labels.entries.size(), 0);
  for (auto& [cls, members] : by_class) {
    if (members.size() < 2) {
      throw Error(ErrorKind::ClassTooSmall, "class " + std::to_string(cls) + " has fewer than 2 samples",
                  static_cast<std::size_t>(cls));
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(members.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    for (std::size_t i = 0; i < n_train; ++i) in_train[members[i]] = 1;
  }

  LabelMap train, test;
  train.num_classes = test.num_classes = labels.num_classes;
  for (std::size_t i = 0; i < labels.entries.size(); ++i) {
    (in_train[i] ? train : test).entries.push_back(labels.entries[i]);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// dictionary and codes

void save_dictionary(const Dictionary& dict, const fs::path& header_path) {
  const auto data = sibling_payload(header_path);
  std::vector<float> payload(dict.bands() * dict.size());
  // column-major storage is already atom-major
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<float>(dict.atoms.data()[i]);
  write_payload(header_path.parent_path() / data, payload.data(), payload.size() * sizeof(float));
  write_file(header_path, {{"bands", dict.bands()}, {"atoms", dict.size()}, {"data", data.string()}});
}

Dictionary load_dictionary(const fs::path& header_path) {
  const json header = read_header(header_path);
  const auto bands = header_field<std::size_t>(header, "bands", header_path);
  const auto atoms = header_field<std::size_t>(header, "atoms", header_path);
  const auto payload = payload_path(header, header_path);
  const auto values = decode_floats(read_payload(payload), bands * atoms, payload);
  Dictionary dict;
  dict.atoms.resize(static_cast<Eigen::Index>(bands), static_cast<Eigen::Index>(atoms));
  for (std::size_t i = 0; i < values.size(); ++i) dict.atoms.data()[i] = static_cast<double>(values[i]);
  return dict;
}

namespace {
constexpr std::size_t kCodeRecordBytes = 12;
}

void save_codes(const CodeMatrix& codes, const fs::path& header_path) {
  const auto data = sibling_payload(header_path);
  std::string payload(codes.nnz() * kCodeRecordBytes, '\0');
  char* out = payload.data();
  for (const auto& e : codes.entries()) {
    std::memcpy(out, &e.sample, 4);
    std::memcpy(out + 4, &e.atom, 4);
    std::memcpy(out + 8, &e.value, 4);
    out += kCodeRecordBytes;
  }
  write_payload(header_path.parent_path() / data, payload.data(), payload.size());
  write_file(header_path, {{"atoms", codes.atoms()},
                           {"n_samples", codes.n_samples()},
                           {"nnz", codes.nnz()},
                           {"data", data.string()}});
}

CodeMatrix load_codes(const fs::path& header_path) {
  const json header = read_header(header_path);
  const auto atoms = header_field<std::size_t>(header, "atoms", header_path);
  const auto n_samples = header_field<std::size_t>(header, "n_samples", header_path);
  const auto nnz = header_field<std::size_t>(header, "nnz", header_path);
  const auto payload_file = payload_path(header, header_path);
  const auto bytes = read_payload(payload_file);
  if (bytes.size() != nnz * kCodeRecordBytes) {
    throw Error(ErrorKind::SizeMismatch, payload_file.string() + ": expected " +
                                             std::to_string(nnz * kCodeRecordBytes) + " bytes");
  }
  std::vector<CodeEntry> entries(nnz);
  const char* in = bytes.data();
  for (auto& e : entries) {
    std::memcpy(&e.sample, in, 4);
    std::memcpy(&e.atom, in + 4, 4);
    std::memcpy(&e.value, in + 8, 4);
    in += kCodeRecordBytes;
  }
  return CodeMatrix(atoms, n_samples, std::move(entries));
}

}  // namespace hsidl
