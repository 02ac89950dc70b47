#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mitoscan {

enum class ErrorCode {
  MalformedFile,
  InvalidField,
  DuplicateSlide,
  UnknownSlide,
  OutOfBounds,
  MalformedRow,
  UnknownLabel,
  InvalidArgument,
  Overflow,
  KernelTooLarge,
  MalformedHeader,
  PayloadSizeMismatch,
  UnsupportedVersion,
  InvalidRange,
  NoValidRegion,
  GroupUnsatisfiable,
  GeometryMismatch,
  InvalidParam,
  DegenerateVariance,
  RectOutOfBounds,
  EmptyInput,
  DegenerateMarginals,
  Unsatisfiable,
  Io,
  InternalInvariant,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::InvalidField: return "InvalidField";
    case ErrorCode::DuplicateSlide: return "DuplicateSlide";
    case ErrorCode::UnknownSlide: return "UnknownSlide";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::KernelTooLarge: return "KernelTooLarge";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::PayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::NoValidRegion: return "NoValidRegion";
    case ErrorCode::GroupUnsatisfiable: return "GroupUnsatisfiable";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::InvalidParam: return "InvalidParam";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::RectOutOfBounds: return "RectOutOfBounds";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorCode::Unsatisfiable: return "Unsatisfiable";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InternalInvariant: return "InternalInvariant";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace mitoscan
