#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <ostream>

#include "plqkit/error.hpp"

namespace plqkit {

/// A real number or one of the two symbolic infinities.
///
/// Infinities are stored as a tag, never as IEEE sentinels, so ordering is
/// exact. No arithmetic is defined; the type only marks interval endpoints
/// and out-of-domain function values.
class ExtReal {
 public:
  enum class Kind : std::uint8_t { NegInf = 0, Finite = 1, PosInf = 2 };

  constexpr ExtReal() = default;

  // Implicit so that breakpoint lists read naturally: {ExtReal::neg_inf(), 1.0, 2.5}.
  ExtReal(double v) : kind_(Kind::Finite), value_(v) {  // NOLINT
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteValue,
                  "ExtReal built from a non-finite double; use neg_inf()/pos_inf()");
    }
  }

  static constexpr ExtReal neg_inf() { return ExtReal(Kind::NegInf); }
  static constexpr ExtReal pos_inf() { return ExtReal(Kind::PosInf); }

  constexpr Kind kind() const { return kind_; }
  constexpr bool is_finite() const { return kind_ == Kind::Finite; }
  constexpr bool is_neg_inf() const { return kind_ == Kind::NegInf; }
  constexpr bool is_pos_inf() const { return kind_ == Kind::PosInf; }

  double value() const {
    if (!is_finite()) {
      throw Error(ErrorCode::NonFiniteValue, "value() called on an infinite ExtReal");
    }
    return value_;
  }

  /// IEEE view, for printing and for callers that accept sentinels.
  double to_double() const {
    switch (kind_) {
      case Kind::NegInf: return -HUGE_VAL;
      case Kind::PosInf: return HUGE_VAL;
      case Kind::Finite: break;
    }
    return value_;
  }

  friend std::partial_ordering operator<=>(const ExtReal& l, const ExtReal& r) {
    if (l.kind_ != r.kind_) {
      return static_cast<int>(l.kind_) <=> static_cast<int>(r.kind_);
    }
    if (l.kind_ != Kind::Finite) return std::partial_ordering::equivalent;
    return l.value_ <=> r.value_;
  }
  friend bool operator==(const ExtReal& l, const ExtReal& r) {
    return (l <=> r) == std::partial_ordering::equivalent;
  }

  friend std::ostream& operator<<(std::ostream& os, const ExtReal& x) {
    if (x.is_neg_inf()) return os << "-inf";
    if (x.is_pos_inf()) return os << "inf";
    return os << x.value_;
  }

 private:
  constexpr explicit ExtReal(Kind k) : kind_(k) {}

  Kind kind_ = Kind::Finite;
  double value_ = 0.0;
};

}  // namespace plqkit
