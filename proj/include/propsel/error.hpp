#pragma once

#include <stdexcept>
#include <string>

namespace propsel {

enum class ErrorCode {
  MissingFile,
  UnsupportedFormat,
  TruncatedPayload,
  BadMagic,
  Format,
  InvalidArgument,
  Degenerate,
  SizeMismatch,
  OutOfFrame,
  InsufficientData,
  EmptyCandidates,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "missing file";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::TruncatedPayload: return "truncated payload";
    case ErrorCode::BadMagic: return "bad magic";
    case ErrorCode::Format: return "format error";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Degenerate: return "degenerate input";
    case ErrorCode::SizeMismatch: return "size mismatch";
    case ErrorCode::OutOfFrame: return "out of frame";
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::EmptyCandidates: return "empty candidate set";
  }
  return "unknown error";
}

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace propsel
