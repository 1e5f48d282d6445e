#pragma once

#include <stdexcept>
#include <string>

namespace range_rte {

enum class ErrorCode {
  kOutOfRange,
  kNoData,
  kSingularGeometry,
  kInsufficientData,
  kDegenerateSolution,
  kHeadingUndefined,
  kSolverFailure,
  kParse,
  kConfig,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kNoData: return "no_data";
    case ErrorCode::kSingularGeometry: return "singular_geometry";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kDegenerateSolution: return "degenerate_solution";
    case ErrorCode::kHeadingUndefined: return "heading_undefined";
    case ErrorCode::kSolverFailure: return "solver_failure";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kConfig: return "config_error";
  }
  return "unknown";
}

// All library failures surface as this exception; `code()` says which
// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace range_rte
