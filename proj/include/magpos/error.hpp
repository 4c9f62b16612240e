#pragma once

#include <stdexcept>
#include <string>

namespace magpos {

enum class ErrorCode {
  kDomain,              // argument outside the function's domain
  kConfig,              // malformed or inconsistent configuration / data file
  kRankDeficient,       // least-squares design matrix without full column rank
  kDimensionMismatch,   // record / basis / id list sizes disagree
  kSingularGeometry,    // point coincides with an anchor
  kInsufficientAnchors, // fewer valid ranges than a fix needs
  kDegenerateGeometry,  // collinear anchors, degenerate calibration bounds
  kUnderdetermined,     // not enough distinct observations for a fit
  kInvalidMeasurement,  // non-positive amplitude and similar
  kNetwork,             // bind / connect failures
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kRankDeficient: return "rank-deficient";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kSingularGeometry: return "singular-geometry";
    case ErrorCode::kInsufficientAnchors: return "insufficient-anchors";
    case ErrorCode::kDegenerateGeometry: return "degenerate-geometry";
    case ErrorCode::kUnderdetermined: return "underdetermined";
    case ErrorCode::kInvalidMeasurement: return "invalid-measurement";
    case ErrorCode::kNetwork: return "network";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace magpos
