#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace hsidl {

enum class ErrorKind {
  // data / file errors
  MissingFile,
  HeaderParse,
  SizeMismatch,
  NonFiniteValue,
  ParseError,
  OutOfBounds,
  DuplicateCoordinate,
  IndexOutOfRange,
  ClassTooSmall,
  EmptyTestSet,
  NonContiguousClasses,
  // argument / shape errors
  InvalidArgument,
  InvalidPatchWidth,
  EvenWindow,
  EmptyCenters,
  DimensionMismatch,
  LengthMismatch,
  EmptyInput,
  NotEnoughSamples,
  AllZeroSamples,
  SingleClass,
  RangeOutOfBounds,
  InvalidBinCount,
  ZeroInitRow,
  ZeroAtom,
  // configuration
  Config,
  // solver produced non-finite values
  Numerical,
};

const char* to_string(ErrorKind kind) noexcept;

/// Exception carrying a machine-checkable kind plus an optional index
/// (a flat value index, a CSV line number, a class id, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::HeaderParse: return "HeaderParse";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::DuplicateCoordinate: return "DuplicateCoordinate";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::ClassTooSmall: return "ClassTooSmall";
    case ErrorKind::EmptyTestSet: return "EmptyTestSet";
    case ErrorKind::NonContiguousClasses: return "NonContiguousClasses";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::InvalidPatchWidth: return "InvalidPatchWidth";
    case ErrorKind::EvenWindow: return "EvenWindow";
    case ErrorKind::EmptyCenters: return "EmptyCenters";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NotEnoughSamples: return "NotEnoughSamples";
    case ErrorKind::AllZeroSamples: return "AllZeroSamples";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::RangeOutOfBounds: return "RangeOutOfBounds";
    case ErrorKind::InvalidBinCount: return "InvalidBinCount";
    case ErrorKind::ZeroInitRow: return "ZeroInitRow";
    case ErrorKind::ZeroAtom: return "ZeroAtom";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Numerical: return "Numerical";
  }
  return "Unknown";
}

}  // namespace hsidl
