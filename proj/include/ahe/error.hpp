#pragma once

#include <stdexcept>
#include <string>

namespace ahe {

enum class ErrorCode {
  InvalidArgument,
  AxisOutOfRange,
  DegreeMismatch,
  DegreeOverflow,
  NonCommuting,
  Singular,
  NonHPD,
  NotAProjection,
  NonGauduchonMetric,
  NoPositiveKernel,
  RankTooLarge,
  PoissonSolveFailed,
  LinearSolveStagnation,
  Diverged,
  NoSpectralGap,
  NoNearbyFlatSubbundle,
  SlopeInequalityViolated,
  InvariantViolated,
  ConfigError,
  IoError,
};

const char* error_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// 1 = validation, 2 = solver failure, 3 = internal invariant violation.
int exit_code_for(ErrorCode code);

}  // namespace ahe
