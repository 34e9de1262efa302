#include "ahe/error.hpp"

namespace ahe {

const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::AxisOutOfRange: return "AxisOutOfRange";
    case ErrorCode::DegreeMismatch: return "DegreeMismatch";
    case ErrorCode::DegreeOverflow: return "DegreeOverflow";
    case ErrorCode::NonCommuting: return "NonCommuting";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::NonHPD: return "NonHPD";
    case ErrorCode::NotAProjection: return "NotAProjection";
    case ErrorCode::NonGauduchonMetric: return "NonGauduchonMetric";
    case ErrorCode::NoPositiveKernel: return "NoPositiveKernel";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::PoissonSolveFailed: return "PoissonSolveFailed";
    case ErrorCode::LinearSolveStagnation: return "LinearSolveStagnation";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NoSpectralGap: return "NoSpectralGap";
    case ErrorCode::NoNearbyFlatSubbundle: return "NoNearbyFlatSubbundle";
    case ErrorCode::SlopeInequalityViolated: return "SlopeInequalityViolated";
    case ErrorCode::InvariantViolated: return "InvariantViolated";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::PoissonSolveFailed:
    case ErrorCode::LinearSolveStagnation:
    case ErrorCode::Diverged:
    case ErrorCode::NoPositiveKernel:
    case ErrorCode::NoSpectralGap:
    case ErrorCode::NoNearbyFlatSubbundle:
      return 2;
    case ErrorCode::SlopeInequalityViolated:
    case ErrorCode::InvariantViolated:
      return 3;
    default:
      return 1;
  }
}

}  // namespace ahe
