#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "plqkit/plq.hpp"

namespace plqkit {

enum class ViolationKind { NegativeQuadratic, SlopeDecrease, Discontinuity };

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::NegativeQuadratic: return "negative-quadratic";
    case ViolationKind::SlopeDecrease: return "slope-decrease";
    case ViolationKind::Discontinuity: return "discontinuity";
  }
  return "unknown";
}

struct ConvexityWitness {
  /// Piece index for NegativeQuadratic, breakpoint index otherwise.
  std::size_t index = 0;
  ViolationKind kind = ViolationKind::SlopeDecrease;
  double magnitude = 0.0;
  /// Location of the violation (breakpoint abscissa; NaN for piece witnesses).
  double x = std::nan("");
};

struct ConvexityReport {
  bool convex = true;
  std::optional<ConvexityWitness> witness;
};

/// Slack on slope comparisons; matches the QP tolerance.
inline constexpr double kConvexityTol = 1e-9;

/// Convexity test on the representation: every a_i >= -tol, interior
/// continuity, and nondecreasing one-sided slopes at interior breakpoints.
/// Reports the leftmost violation.
inline ConvexityReport is_convex(const PlqFunction& f, double tol = kConvexityTol) {
  ConvexityReport rep;
  const auto fail = [&rep](std::size_t idx, ViolationKind k, double mag, double x) {
    rep.convex = false;
    rep.witness = ConvexityWitness{idx, k, mag, x};
    return rep;
  };
  for (std::size_t i = 0; i < f.size(); ++i) {
    const QuadCoeffs& p = f.piece(i);
    if (p.a < -tol) return fail(i, ViolationKind::NegativeQuadratic, -p.a, std::nan(""));
    if (i + 1 == f.size()) break;
    const double x = f.breakpoint(i + 1).value();
    const QuadCoeffs& nx = f.piece(i + 1);
    const double lv = p.value(x);
    const double jump = std::abs(lv - nx.value(x));
    if (jump > std::max(tol, kContinuityTol * std::max(1.0, std::abs(lv)))) {
      return fail(i + 1, ViolationKind::Discontinuity, jump, x);
    }
    const double gap = p.slope(x) - nx.slope(x);
    if (gap > tol * std::max(1.0, std::abs(p.slope(x)))) {
      return fail(i + 1, ViolationKind::SlopeDecrease, gap, x);
    }
  }
  return rep;
}

struct FeasibilityClass {
  enum class Tag { Feasible, ConcaveUnbounded, SlopeGapUnbounded };
  Tag tag = Tag::Feasible;
  /// Offending piece indices (ConcaveUnbounded) or the two tail pieces (SlopeGapUnbounded).
  std::vector<std::size_t> detail;

  bool feasible() const { return tag == Tag::Feasible; }
};

inline const char* to_string(FeasibilityClass::Tag t) {
  switch (t) {
    case FeasibilityClass::Tag::Feasible: return "Feasible";
    case FeasibilityClass::Tag::ConcaveUnbounded: return "ConcaveUnbounded";
    case FeasibilityClass::Tag::SlopeGapUnbounded: return "SlopeGapUnbounded";
  }
  return "Unknown";
}

/// Raised by projection and simplification when no convex function lies at
/// finite distance from the input.
class InfeasibleInputError : public Error {
 public:
  explicit InfeasibleInputError(FeasibilityClass cls, const std::string& why = {})
      : Error(ErrorCode::InfeasibleInput,
              std::string(to_string(cls.tag)) + (why.empty() ? "" : ": " + why)),
        cls_(std::move(cls)) {}
  const FeasibilityClass& feasibility() const noexcept { return cls_; }

 private:
  FeasibilityClass cls_;
};

/// Detects the two configurations in which every convex g has ||f - g|| = inf:
/// a strictly concave quadratic on an unbounded tail, or two affine tails
/// whose slopes decrease from left to right.
inline FeasibilityClass classify_feasibility(const PlqFunction& f) {
  using Tag = FeasibilityClass::Tag;
  const std::size_t m = f.size();
  FeasibilityClass out;
  if (f.unbounded_left() && f.piece(0).a < 0) out.detail.push_back(0);
  if (f.unbounded_right() && f.piece(m - 1).a < 0 && (out.detail.empty() || m > 1)) {
    out.detail.push_back(m - 1);
  }
  if (!out.detail.empty()) {
    out.tag = Tag::ConcaveUnbounded;
    return out;
  }
  if (m >= 2 && f.unbounded_left() && f.unbounded_right() && f.piece(0).a == 0 &&
      f.piece(m - 1).a == 0) {
    const double s_left = f.piece(0).slope(f.breakpoint(1).value());
    const double s_right = f.piece(m - 1).slope(f.breakpoint(m - 1).value());
    if (s_left > s_right) {
      out.tag = Tag::SlopeGapUnbounded;
      out.detail = {0, m - 1};
    }
  }
  return out;
}

namespace detail {

inline PlqFunction insert_tail_breakpoints(const PlqFunction& f, std::optional<double> left,
                                           std::optional<double> right) {
  std::vector<ExtReal> bps;
  std::vector<QuadCoeffs> pcs;
  const std::size_t m = f.size();
  bps.push_back(f.lower());
  if (left) {
    bps.emplace_back(*left);
    pcs.push_back(f.piece(0));
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0) bps.push_back(f.breakpoint(i));
    pcs.push_back(f.piece(i));
  }
  if (right) {
    bps.emplace_back(*right);
    pcs.push_back(f.piece(m - 1));
  }
  bps.push_back(f.upper());
  return validate_plq(std::move(bps), std::move(pcs), kNoContinuityCheck);
}

}  // namespace detail

/// Inserts x_{1.5} < x_2 and x_{m+0.5} > x_m into a function with two
/// strictly convex unbounded tails whose slopes at x_2 and x_m decrease, so
/// that f'(x_{1.5}) <= f'(x_{m+0.5}). The two points sit at distance
/// 1, 2, 4, ... from x_2 and x_m; the first distance that works is used.
inline PlqFunction extend_breakpoints(const PlqFunction& f) {
  const std::size_t m = f.size();
  if (m < 2 || !f.unbounded_left() || !f.unbounded_right() || !(f.piece(0).a > 0) ||
      !(f.piece(m - 1).a > 0)) {
    throw Error(ErrorCode::HypothesisNotMet, "need two unbounded tails with positive curvature");
  }
  const double x2 = f.breakpoint(1).value();
  const double xm = f.breakpoint(m - 1).value();
  const QuadCoeffs& first = f.piece(0);
  const QuadCoeffs& last = f.piece(m - 1);
  if (!(first.slope(x2) > last.slope(xm))) {
    throw Error(ErrorCode::HypothesisNotMet, "f'(x_2) <= f'(x_m); no extension needed");
  }
  for (double d = 1.0; std::isfinite(d); d *= 2.0) {
    const double p = x2 - d;
    const double q = xm + d;
    if (first.slope(p) <= last.slope(q)) return detail::insert_tail_breakpoints(f, p, q);
  }
  throw Error(ErrorCode::HypothesisNotMet, "doubling did not terminate");  // unreachable for a > 0
}

/// f split into its unbounded pieces (which any finite-distance convex
/// approximation must reproduce) and the bounded core between them.
struct PinnedDecomposition {
  std::optional<QuadCoeffs> left;
  std::optional<QuadCoeffs> right;
  /// Finite end of the left tail, x_2 (absent when f is a single piece on R).
  std::optional<double> left_end;
  /// Finite start of the right tail, x_m.
  std::optional<double> right_start;
  /// Pieces strictly between the tails; absent when the core has zero width.
  std::optional<PlqFunction> core;
};

inline PinnedDecomposition pin_unbounded(const PlqFunction& f) {
  const FeasibilityClass cls = classify_feasibility(f);
  if (!cls.feasible()) throw InfeasibleInputError(cls, "no convex function at finite distance");
  const std::size_t m = f.size();
  PinnedDecomposition out;
  std::size_t first = 0;
  std::size_t last = m;  // exclusive
  if (f.unbounded_left()) {
    out.left = f.piece(0);
    if (m > 1) out.left_end = f.breakpoint(1).value();
    first = 1;
  }
  if (f.unbounded_right()) {
    out.right = f.piece(m - 1);
    if (m > 1) out.right_start = f.breakpoint(m - 1).value();
    last = m - 1;
  }
  if (first < last) {
    std::vector<ExtReal> bps(f.breakpoints().begin() + static_cast<std::ptrdiff_t>(first),
                             f.breakpoints().begin() + static_cast<std::ptrdiff_t>(last + 1));
    std::vector<QuadCoeffs> pcs(f.pieces().begin() + static_cast<std::ptrdiff_t>(first),
                                f.pieces().begin() + static_cast<std::ptrdiff_t>(last));
    out.core = validate_plq(std::move(bps), std::move(pcs), kNoContinuityCheck);
  }
  return out;
}

/// Inverse of pin_unbounded.
inline PlqFunction reassemble(const PinnedDecomposition& d) {
  std::vector<ExtReal> bps;
  std::vector<QuadCoeffs> pcs;
  if (d.left) {
    bps.push_back(ExtReal::neg_inf());
    pcs.push_back(*d.left);
    if (d.left_end) bps.emplace_back(*d.left_end);
  }
  if (d.core) {
    const auto cb = d.core->breakpoints();
    for (std::size_t i = 0; i < cb.size(); ++i) {
      if (i == 0 && d.left) continue;
      bps.push_back(cb[i]);
    }
    for (const auto& p : d.core->pieces()) pcs.push_back(p);
    if (d.right) bps.pop_back();
  }
  if (d.right) {
    if (!d.right_start) {
      // single piece on the real line: left and right reference the same quadratic
      bps.push_back(ExtReal::pos_inf());
    } else {
      if (bps.empty() || !(bps.back() == ExtReal(*d.right_start))) bps.emplace_back(*d.right_start);
      pcs.push_back(*d.right);
      bps.push_back(ExtReal::pos_inf());
    }
  }
  return validate_plq(std::move(bps), std::move(pcs), kNoContinuityCheck);
}

}  // namespace plqkit
