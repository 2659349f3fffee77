#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace plqkit {

enum class ErrorCode {
  LengthMismatch,
  NonIncreasingBreakpoints,
  InteriorInfinity,
  DiscontinuousInterior,
  NonFiniteValue,
  OutsideDomain,
  DomainMismatch,
  EmptyInterval,
  HypothesisNotMet,
  InfeasibleInput,
  DimensionMismatch,
  TooLarge,
  NotASpline,
  InvalidArgument,
  MalformedDocument,
  BadRange,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonIncreasingBreakpoints: return "NonIncreasingBreakpoints";
    case ErrorCode::InteriorInfinity: return "InteriorInfinity";
    case ErrorCode::DiscontinuousInterior: return "DiscontinuousInterior";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::OutsideDomain: return "OutsideDomain";
    case ErrorCode::DomainMismatch: return "DomainMismatch";
    case ErrorCode::EmptyInterval: return "EmptyInterval";
    case ErrorCode::HypothesisNotMet: return "HypothesisNotMet";
    case ErrorCode::InfeasibleInput: return "InfeasibleInput";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NotASpline: return "NotASpline";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MalformedDocument: return "MalformedDocument";
    case ErrorCode::BadRange: return "BadRange";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library.
///
/// `index()` carries the offending breakpoint or piece index when the error
/// is tied to one, and `magnitude()` the size of the violation (for example
/// the jump of a discontinuity). `locus()` is a field path in a document.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> index = std::nullopt,
        double magnitude = std::nan(""), std::string locus = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        message_(what),
        index_(index),
        magnitude_(magnitude),
        locus_(std::move(locus)) {}

  ErrorCode code() const noexcept { return code_; }
  /// what() without the leading code name.
  const std::string& message() const noexcept { return message_; }
  std::optional<std::size_t> index() const noexcept { return index_; }
  double magnitude() const noexcept { return magnitude_; }
  const std::string& locus() const noexcept { return locus_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::optional<std::size_t> index_;
  double magnitude_;
  std::string locus_;
};

}  // namespace plqkit
