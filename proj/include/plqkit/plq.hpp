#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plqkit/error.hpp"
#include "plqkit/ext_real.hpp"

namespace plqkit {

/// Coefficients of a x^2 + b x + c.
struct QuadCoeffs {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  double value(double x) const { return (a * x + b) * x + c; }
  double slope(double x) const { return 2.0 * a * x + b; }

  friend bool operator==(const QuadCoeffs&, const QuadCoeffs&) = default;
};

inline QuadCoeffs operator-(const QuadCoeffs& l, const QuadCoeffs& r) {
  return {l.a - r.a, l.b - r.b, l.c - r.c};
}

/// Relative tolerance used for interior continuity, scaled by max(1, |f(x_i)|).
inline constexpr double kContinuityTol = 1e-8;
/// Pass as the tolerance of validate_plq to accept interior jumps.
inline constexpr double kNoContinuityCheck = std::numeric_limits<double>::infinity();

class PlqFunction;
PlqFunction validate_plq(std::vector<ExtReal> breakpoints, std::vector<QuadCoeffs> pieces,
                         double tol = kContinuityTol);

/// Univariate piecewise linear-quadratic function.
///
/// Piece i is active on (x_i, x_{i+1}]; when the last breakpoint is +inf the
/// last piece covers the open right tail. Instances are immutable and can only
/// be obtained through validate_plq, so the ordering invariants always hold.
/// Interior continuity holds unless the instance was validated with
/// kNoContinuityCheck.
class PlqFunction {
 public:
  std::span<const ExtReal> breakpoints() const { return breakpoints_; }
  std::span<const QuadCoeffs> pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }
  const QuadCoeffs& piece(std::size_t i) const { return pieces_.at(i); }
  const ExtReal& breakpoint(std::size_t i) const { return breakpoints_.at(i); }

  const ExtReal& lower() const { return breakpoints_.front(); }
  const ExtReal& upper() const { return breakpoints_.back(); }
  bool unbounded_left() const { return lower().is_neg_inf(); }
  bool unbounded_right() const { return upper().is_pos_inf(); }
  bool bounded() const { return !unbounded_left() && !unbounded_right(); }

  std::vector<ExtReal> breakpoint_vector() const { return breakpoints_; }
  std::vector<QuadCoeffs> piece_vector() const { return pieces_; }

  friend bool operator==(const PlqFunction&, const PlqFunction&) = default;

 private:
  PlqFunction(std::vector<ExtReal> bps, std::vector<QuadCoeffs> pieces)
      : breakpoints_(std::move(bps)), pieces_(std::move(pieces)) {}

  friend PlqFunction validate_plq(std::vector<ExtReal>, std::vector<QuadCoeffs>, double);

  std::vector<ExtReal> breakpoints_;
  std::vector<QuadCoeffs> pieces_;
};

inline PlqFunction validate_plq(std::vector<ExtReal> breakpoints, std::vector<QuadCoeffs> pieces,
                                double tol) {
  if (pieces.empty() || breakpoints.size() != pieces.size() + 1) {
    throw Error(ErrorCode::LengthMismatch,
                "need m >= 1 pieces and m + 1 breakpoints, got " + std::to_string(pieces.size()) +
                    " pieces and " + std::to_string(breakpoints.size()) + " breakpoints");
  }
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.c)) {
      throw Error(ErrorCode::NonFiniteValue, "piece " + std::to_string(i) + " has a non-finite coefficient", i);
    }
  }
  for (std::size_t i = 1; i + 1 < breakpoints.size(); ++i) {
    if (!breakpoints[i].is_finite()) {
      throw Error(ErrorCode::InteriorInfinity, "interior breakpoint " + std::to_string(i) + " is infinite", i);
    }
  }
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    if (!(breakpoints[i] < breakpoints[i + 1])) {
      throw Error(ErrorCode::NonIncreasingBreakpoints,
                  "breakpoint " + std::to_string(i + 1) + " does not exceed its predecessor", i + 1);
    }
  }
  if (tol != kNoContinuityCheck) {
    for (std::size_t i = 1; i + 1 < breakpoints.size(); ++i) {
      const double x = breakpoints[i].value();
      const double lv = pieces[i - 1].value(x);
      const double jump = std::abs(lv - pieces[i].value(x));
      if (jump > tol * std::max(1.0, std::abs(lv))) {
        throw Error(ErrorCode::DiscontinuousInterior,
                    "jump of " + std::to_string(jump) + " at x = " + std::to_string(x), i, jump);
      }
    }
  }
  return PlqFunction(std::move(breakpoints), std::move(pieces));
}

/// Absolute jumps |f_i(x_{i+1}) - f_{i+1}(x_{i+1})| at the interior breakpoints.
inline std::vector<double> continuity_jumps(const PlqFunction& f) {
  std::vector<double> out;
  for (std::size_t i = 1; i < f.size(); ++i) {
    const double x = f.breakpoint(i).value();
    out.push_back(std::abs(f.piece(i - 1).value(x) - f.piece(i).value(x)));
  }
  return out;
}

enum class Side { Left, Right };

namespace detail {

// Index of the piece whose interval (x_i, x_{i+1}] contains x, if any.
inline std::optional<std::size_t> piece_containing(const PlqFunction& f, double x) {
  const auto bps = f.breakpoints();
  const ExtReal ex(x);
  const auto it = std::lower_bound(bps.begin(), bps.end(), ex);
  if (it == bps.begin() || it == bps.end()) return std::nullopt;
  return static_cast<std::size_t>(it - bps.begin()) - 1;
}

// Piece adjacent to x on the given side, if that side meets dom f.
inline std::optional<std::size_t> piece_adjacent(const PlqFunction& f, double x, Side side) {
  if (side == Side::Left) return piece_containing(f, x);
  const auto bps = f.breakpoints();
  const auto it = std::upper_bound(bps.begin(), bps.end(), ExtReal(x));
  if (it == bps.begin() || it == bps.end()) return std::nullopt;
  return static_cast<std::size_t>(it - bps.begin()) - 1;
}

// Exact integral of d(x)^2 over [lo, hi], evaluated in coordinates centred on
// the interval so that no cancellation occurs between large monomials.
inline double squared_integral(const QuadCoeffs& d, double lo, double hi) {
  const double c = 0.5 * (lo + hi);
  const double h = 0.5 * (hi - lo);
  const double A = d.a * h * h;
  const double B = d.slope(c) * h;
  const double C = d.value(c);
  // int_{-1}^{1} (A t^2 + B t + C)^2 dt
  const double v = 0.4 * A * A + (2.0 / 3.0) * B * B + 2.0 * C * C + (4.0 / 3.0) * A * C;
  return h * std::max(0.0, v);
}

}  // namespace detail

/// f(x), or +inf outside dom f.
inline ExtReal eval(const PlqFunction& f, double x) {
  const auto i = detail::piece_containing(f, x);
  if (!i) return ExtReal::pos_inf();
  return ExtReal(f.piece(*i).value(x));
}

/// One-sided derivative of the piece adjacent to x.
inline double derivative(const PlqFunction& f, double x, Side side) {
  const auto i = detail::piece_adjacent(f, x, side);
  if (!i) {
    throw Error(ErrorCode::OutsideDomain,
                std::string(side == Side::Left ? "left" : "right") + " neighbourhood of x = " +
                    std::to_string(x) + " misses dom f");
  }
  return f.piece(*i).slope(x);
}

/// Power moments M_k = int_lo^hi x^k dx for k = 0..4.
struct MomentVector {
  std::array<double, 5> m{};
  double operator[](std::size_t k) const { return m[k]; }
};

inline MomentVector interval_moments(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw Error(ErrorCode::EmptyInterval, "need finite lo < hi");
  }
  // hi^{k+1} - lo^{k+1} = (hi - lo) * sum_{j=0}^{k} hi^j lo^{k-j}
  const double w = hi - lo;
  MomentVector out;
  for (int k = 0; k <= 4; ++k) {
    double s = 0.0;
    for (int j = 0; j <= k; ++j) s += std::pow(hi, j) * std::pow(lo, k - j);
    out.m[static_cast<std::size_t>(k)] = w * s / static_cast<double>(k + 1);
  }
  return out;
}

/// E(theta) = theta^T H theta - 2 q^T theta + c0 with theta = (alpha, beta, gamma).
struct QuadraticForm {
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Vector3d q = Eigen::Vector3d::Zero();
  double c0 = 0.0;

  double evaluate(const Eigen::Vector3d& theta) const {
    return theta.dot(H * theta) - 2.0 * q.dot(theta) + c0;
  }
  double evaluate(const QuadCoeffs& t) const { return evaluate(Eigen::Vector3d(t.a, t.b, t.c)); }

  QuadraticForm& operator+=(const QuadraticForm& o) {
    H += o.H;
    q += o.q;
    c0 += o.c0;
    return *this;
  }
  QuadraticForm scaled(double s) const { return {s * H, s * q, s * c0}; }
};

/// Squared L2 error of fitting `piece` on [lo, hi] by a quadratic theta,
/// assembled from the interval's power moments.
inline QuadraticForm segment_error_form(const QuadCoeffs& piece, double lo, double hi) {
  const MomentVector M = interval_moments(lo, hi);
  QuadraticForm out;
  out.H << M[4], M[3], M[2],
           M[3], M[2], M[1],
           M[2], M[1], M[0];
  const Eigen::Vector3d tf(piece.a, piece.b, piece.c);
  out.q = out.H * tf;
  out.c0 = tf.dot(out.q);
  return out;
}

namespace detail {

inline double dedupe_tolerance(std::span<const ExtReal> a, std::span<const ExtReal> b) {
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (auto s : {a, b}) {
    for (const auto& x : s) {
      if (!x.is_finite()) continue;
      lo = std::min(lo, x.value());
      hi = std::max(hi, x.value());
    }
  }
  const double width = hi > lo ? hi - lo : 1.0;
  return 1e-12 * width;
}

inline bool same_endpoint(const ExtReal& l, const ExtReal& r, double tol) {
  if (l.is_finite() != r.is_finite()) return false;
  if (!l.is_finite()) return l == r;
  return std::abs(l.value() - r.value()) <= tol;
}

}  // namespace detail

/// Re-expresses f on a finer breakpoint vector with the same end points.
/// Each new interval takes the piece of f that contains its interior.
inline PlqFunction restrict_to(const PlqFunction& f, std::vector<ExtReal> breakpoints) {
  std::vector<QuadCoeffs> pieces;
  pieces.reserve(breakpoints.size() - 1);
  for (std::size_t k = 0; k + 1 < breakpoints.size(); ++k) {
    const ExtReal& lo = breakpoints[k];
    const ExtReal& hi = breakpoints[k + 1];
    std::size_t idx = 0;
    if (lo.is_finite() && hi.is_finite()) {
      idx = detail::piece_containing(f, 0.5 * (lo.value() + hi.value())).value_or(0);
    } else if (lo.is_finite()) {
      idx = f.size() - 1;
    } else if (hi.is_finite()) {
      idx = 0;
    }
    pieces.push_back(f.piece(idx));
  }
  return validate_plq(std::move(breakpoints), std::move(pieces), kNoContinuityCheck);
}

/// Both functions re-expressed on the sorted union of their breakpoints.
inline std::pair<PlqFunction, PlqFunction> common_refinement(const PlqFunction& f,
                                                             const PlqFunction& g) {
  const double tol = detail::dedupe_tolerance(f.breakpoints(), g.breakpoints());
  if (!detail::same_endpoint(f.lower(), g.lower(), tol) ||
      !detail::same_endpoint(f.upper(), g.upper(), tol)) {
    throw Error(ErrorCode::DomainMismatch, "functions have different domains");
  }
  std::vector<double> interior;
  for (const auto* h : {&f, &g}) {
    for (std::size_t i = 1; i + 1 < h->breakpoints().size(); ++i) {
      interior.push_back(h->breakpoint(i).value());
    }
  }
  std::sort(interior.begin(), interior.end());
  std::vector<ExtReal> merged{f.lower()};
  for (double x : interior) {
    const ExtReal& last = merged.back();
    if (last.is_finite() && x - last.value() <= tol) continue;
    merged.push_back(x);
  }
  if (merged.size() > 1 && f.upper().is_finite() && merged.back().is_finite() &&
      f.upper().value() - merged.back().value() <= tol) {
    merged.pop_back();
  }
  merged.push_back(f.upper());
  return {restrict_to(f, merged), restrict_to(g, merged)};
}

/// ||f - g||_2, +inf when the domains differ or the functions differ on an
/// unbounded interval.
inline ExtReal l2_distance(const PlqFunction& f, const PlqFunction& g) {
  const double tol = detail::dedupe_tolerance(f.breakpoints(), g.breakpoints());
  if (!detail::same_endpoint(f.lower(), g.lower(), tol) ||
      !detail::same_endpoint(f.upper(), g.upper(), tol)) {
    return ExtReal::pos_inf();
  }
  const auto [fr, gr] = common_refinement(f, g);
  const auto close = [](double u, double v) {
    return std::abs(u - v) <= 1e-12 * std::max({1.0, std::abs(u), std::abs(v)});
  };
  double total = 0.0;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    const ExtReal& lo = fr.breakpoint(i);
    const ExtReal& hi = fr.breakpoint(i + 1);
    const QuadCoeffs& p = fr.piece(i);
    const QuadCoeffs& q = gr.piece(i);
    if (!lo.is_finite() || !hi.is_finite()) {
      if (!(close(p.a, q.a) && close(p.b, q.b) && close(p.c, q.c))) return ExtReal::pos_inf();
      continue;
    }
    total += detail::squared_integral(p - q, lo.value(), hi.value());
  }
  return ExtReal(std::sqrt(total));
}

}  // namespace plqkit
