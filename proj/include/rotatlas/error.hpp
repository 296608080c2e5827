#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rotatlas {

enum class ErrorKind {
  DegreeError,
  NotALiftError,
  LevelOutOfRange,
  NotMonotone,
  TargetOutsideRotationSet,
  NoConvergence,
  PeriodicOrbitDetected,
  EmptyResult,
  OrderViolation,
  FiberEscape,
  UndefinedDerivative,
  EmptyBin,
  DuplicateTarget,
  SemiconjugacyDefectTooLarge,
  UnknownId,
  ConfigError,
  IoError,
};

inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegreeError: return "DegreeError";
    case ErrorKind::NotALiftError: return "NotALiftError";
    case ErrorKind::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorKind::NotMonotone: return "NotMonotone";
    case ErrorKind::TargetOutsideRotationSet: return "TargetOutsideRotationSet";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::PeriodicOrbitDetected: return "PeriodicOrbitDetected";
    case ErrorKind::EmptyResult: return "EmptyResult";
    case ErrorKind::OrderViolation: return "OrderViolation";
    case ErrorKind::FiberEscape: return "FiberEscape";
    case ErrorKind::UndefinedDerivative: return "UndefinedDerivative";
    case ErrorKind::EmptyBin: return "EmptyBin";
    case ErrorKind::DuplicateTarget: return "DuplicateTarget";
    case ErrorKind::SemiconjugacyDefectTooLarge: return "SemiconjugacyDefectTooLarge";
    case ErrorKind::UnknownId: return "UnknownId";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

// All library failures derive from Error; what() starts with the kind name.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bisection ran out of room; carries the best level found.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(double best_alpha, double residual, const std::string& detail)
      : Error(ErrorKind::NoConvergence, detail), best_alpha_(best_alpha), residual_(residual) {}

  double best_alpha() const noexcept { return best_alpha_; }
  double residual() const noexcept { return residual_; }

 private:
  double best_alpha_;
  double residual_;
};

// The orbit closed up; period is the index distance of the near-repeat.
class PeriodicOrbitError : public Error {
 public:
  PeriodicOrbitError(std::size_t period, const std::string& detail)
      : Error(ErrorKind::PeriodicOrbitDetected, detail), period_(period) {}

  std::size_t period() const noexcept { return period_; }

 private:
  std::size_t period_;
};

}  // namespace rotatlas
