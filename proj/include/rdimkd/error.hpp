#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rdimkd {

enum class Errc {
  RankDeficient,
  NotSymmetric,
  NoConvergence,
  TooFewSamples,
  InvalidDims,
  ShapeMismatch,
  Diverged,
  NotNormalized,
  LengthMismatch,
  MaskLengthMismatch,
  NotOrthonormal,
  EpochOutOfRange,
  NonFinite,
  ParseError,
  ValidationError,
  DimensionMismatch,
  IoError,
};

inline std::string_view errc_name(Errc e) {
  switch (e) {
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::InvalidDims: return "InvalidDims";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::Diverged: return "Diverged";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::MaskLengthMismatch: return "MaskLengthMismatch";
    case Errc::NotOrthonormal: return "NotOrthonormal";
    case Errc::EpochOutOfRange: return "EpochOutOfRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::ParseError: return "ParseError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

// All library failures are reported through this type; code() is the
// machine-checkable part, what() carries the diagnostic.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace rdimkd
