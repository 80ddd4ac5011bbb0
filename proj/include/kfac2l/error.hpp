#pragma once

#include <stdexcept>
#include <string>

namespace kfac2l {

enum class ErrorCode {
  DimensionMismatch,
  Singular,
  NotPositiveDefinite,
  SizeGuard,
  EmptyBatch,
  ZeroSeed,
  Diverged,
  NoViableConfig,
  BadConfig,
  BadMagic,
  TruncatedFile,
  DimMismatch,
  Io,
};

const char* to_string(ErrorCode code);

/** Single exception type for the library; the code tells callers what failed. */
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), m_code(code) {}

  ErrorCode code() const noexcept { return m_code; }

 private:
  ErrorCode m_code;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::SizeGuard: return "SizeGuard";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::ZeroSeed: return "ZeroSeed";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NoViableConfig: return "NoViableConfig";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace kfac2l
