#pragma once

// Fewest-piece approximation of a PLQ function by merging its pieces into
// contiguous blocks: exact search over cut placements for a given piece
// count, and a dichotomy over the count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "plqkit/analysis.hpp"
#include "plqkit/cuts.hpp"
#include "plqkit/detail/block_fit.hpp"
#include "plqkit/projection.hpp"

namespace plqkit {

enum class Shape { Convex, Free };

inline const char* to_string(Shape s) { return s == Shape::Convex ? "convex" : "free"; }

struct FitMode {
  Shape shape = Shape::Convex;
  /// Equal one-sided slopes at every output breakpoint.
  bool smooth = false;
  /// Keeps a >= 0 on every output piece in Free mode.
  bool keep_sign_in_free = false;
};

struct SimplifyConfig {
  /// Squared-error tolerance; a fit is accepted when its error is strictly below.
  double epsilon = 0.0;
  /// Minimum output piece width; defaults to 1e-6 times the bounded core width.
  std::optional<double> delta;
  double merge_tol = 1e-6;
  std::uint64_t node_limit = 5'000'000;
};

struct CutFit {
  FitResult fit;
  CutAssignment cuts;
};

struct MinimalFit {
  std::size_t r = 0;
  FitResult fit;
  CutAssignment cuts;
};

/// Single left-to-right pass merging a piece into the current run when each
/// coefficient is within merge_tol * max(1, |run coefficient|) of the run's
/// first piece. The run keeps its first piece's coefficients, so seams may
/// become discontinuous.
inline PlqFunction greedy_merge(const PlqFunction& rho, double merge_tol = 1e-6) {
  if (!(merge_tol >= 0.0)) throw Error(ErrorCode::InvalidArgument, "merge_tol must be >= 0");
  const auto close = [merge_tol](double run, double v) {
    return std::abs(v - run) <= merge_tol * std::max(1.0, std::abs(run));
  };
  std::vector<ExtReal> bps{rho.lower()};
  std::vector<QuadCoeffs> pcs{rho.piece(0)};
  for (std::size_t i = 1; i < rho.size(); ++i) {
    const QuadCoeffs& run = pcs.back();
    const QuadCoeffs& p = rho.piece(i);
    if (close(run.a, p.a) && close(run.b, p.b) && close(run.c, p.c)) continue;
    bps.push_back(rho.breakpoint(i));
    pcs.push_back(p);
  }
  bps.push_back(rho.upper());
  return validate_plq(std::move(bps), std::move(pcs), kNoContinuityCheck);
}

namespace detail {

inline ShapeRules rules_for(const FitMode& mode) {
  if (mode.shape == Shape::Convex) return {true, true, mode.smooth};
  return {mode.keep_sign_in_free, false, mode.smooth};
}

inline double piece_tolerance_scale(const PlqFunction& rho) {
  double s = 1.0;
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!rho.breakpoint(i).is_finite() || !rho.breakpoint(i + 1).is_finite()) continue;
    s += squared_integral(rho.piece(i), rho.breakpoint(i).value(), rho.breakpoint(i + 1).value());
  }
  return s;
}

/// Block covering pieces [i, j) of rho, or nullopt when no single quadratic
/// may represent it: narrower than delta, or spanning both unbounded
/// pieces with different quadratics.
inline std::optional<FitBlock> make_block(const PlqFunction& rho, std::size_t i, std::size_t j, double delta) {
  FitBlock b{rho.breakpoint(i), rho.breakpoint(j), {}, std::nullopt};
  const bool left_tail = !b.lo.is_finite();
  const bool right_tail = !b.hi.is_finite();
  if (!left_tail && !right_tail && b.hi.value() - b.lo.value() < delta) return std::nullopt;
  if (left_tail && right_tail && !(rho.piece(0) == rho.piece(rho.size() - 1))) return std::nullopt;
  if (left_tail) b.pinned = rho.piece(0);
  if (right_tail) b.pinned = rho.piece(rho.size() - 1);
  for (std::size_t k = i; k < j; ++k) {
    if (!rho.breakpoint(k).is_finite() || !rho.breakpoint(k + 1).is_finite()) continue;
    b.sources.push_back({rho.piece(k), rho.breakpoint(k).value(), rho.breakpoint(k + 1).value()});
  }
  return b;
}

struct AssignmentFit {
  bool feasible = false;
  BlockFit fit;
};

inline AssignmentFit fit_assignment(const PlqFunction& rho, const CutAssignment& cuts, const FitMode& mode,
                                    double delta) {
  std::vector<FitBlock> blocks;
  for (std::size_t j = 0; j < cuts.r(); ++j) {
    auto b = make_block(rho, cuts.block_begin(j), cuts.block_end(j), delta);
    if (!b) return {};
    blocks.push_back(std::move(*b));
  }
  AssignmentFit out;
  out.fit = fit_blocks(blocks, rules_for(mode));
  out.feasible = out.fit.feasible;
  return out;
}

inline FitResult to_fit_result(const PlqFunction& rho, const CutAssignment& cuts, const BlockFit& fit) {
  std::vector<ExtReal> grid{rho.lower()};
  for (std::size_t c : cuts.cuts()) grid.push_back(rho.breakpoint(c));
  grid.push_back(rho.upper());
  FitResult out{assemble(std::move(grid), fit.coeffs), fit.squared_error, FitStatus::Optimal, {}};
  out.diagnostics.qp_solves = 1;
  out.diagnostics.qp_iterations = fit.solution.iterations;
  out.diagnostics.active_constraints = fit.active_inequalities;
  out.diagnostics.kkt = fit.kkt;
  return out;
}

/// Incumbent replacement rule shared by the exact searches: strictly better
/// by more than a relative 1e-10 (plus an absolute floor), so the first
/// cut vector in lexicographic order wins near-ties.
struct Incumbent {
  double floor = 1e-14;
  std::optional<CutAssignment> cuts;
  BlockFit fit;
  double value = std::numeric_limits<double>::infinity();

  double threshold() const { return std::isfinite(value) ? value - (1e-10 * std::abs(value) + floor) : value; }
  bool offer(const CutAssignment& c, BlockFit&& f) {
    if (!(f.squared_error < threshold())) return false;
    value = f.squared_error;
    fit = std::move(f);
    cuts = c;
    return true;
  }
};

inline double resolve_delta(const PlqFunction& rho, const SimplifyConfig& cfg) {
  const double d = cfg.delta.value_or(1e-6 * bounded_core_width(rho));
  if (!(d > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");
  return d;
}

inline void check_inputs(const PlqFunction& rho, std::size_t r, const FitMode& mode) {
  if (r < 1 || r > rho.size()) {
    throw Error(ErrorCode::InvalidArgument,
                "need 1 <= r <= n, got r = " + std::to_string(r) + ", n = " + std::to_string(rho.size()));
  }
  if (mode.shape == Shape::Convex) {
    const FeasibilityClass cls = classify_feasibility(rho);
    if (!cls.feasible()) throw InfeasibleInputError(cls, "no convex function at finite distance");
  }
}

[[noreturn]] inline void no_feasible_assignment(std::size_t r) {
  throw Error(ErrorCode::InfeasibleInput,
              "no assignment into " + std::to_string(r) + " pieces satisfies the shape constraints");
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k, std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return c;
}

}  // namespace detail

/// Exhaustive search over all C(n-1, r-1) cut vectors in lexicographic order.
inline CutFit brute_force_fit(const PlqFunction& rho, std::size_t r, const FitMode& mode,
                              const SimplifyConfig& cfg = {}) {
  detail::check_inputs(rho, r, mode);
  const std::size_t n = rho.size();
  if (detail::binomial(n - 1, r - 1, 1'000'000) > 1'000'000) {
    throw Error(ErrorCode::TooLarge, "more than 1e6 cut assignments");
  }
  const double delta = detail::resolve_delta(rho, cfg);
  detail::Incumbent inc;
  inc.floor = 1e-14 * detail::piece_tolerance_scale(rho);
  std::vector<std::size_t> cuts(r - 1);
  for (std::size_t k = 0; k + 1 < r; ++k) cuts[k] = k + 1;
  std::uint64_t visited = 0;
  while (true) {
    const CutAssignment ca(n, cuts);
    ++visited;
    auto af = detail::fit_assignment(rho, ca, mode, delta);
    if (af.feasible) inc.offer(ca, std::move(af.fit));
    // next combination in lexicographic order
    std::size_t k = r - 1;
    while (k > 0 && cuts[k - 1] == n - (r - 1) + (k - 1)) --k;
    if (k == 0) break;
    ++cuts[k - 1];
    for (std::size_t t = k; t + 1 < r; ++t) cuts[t] = cuts[t - 1] + 1;
  }
  if (!inc.cuts) detail::no_feasible_assignment(r);
  CutFit out{detail::to_fit_result(rho, *inc.cuts, inc.fit), *inc.cuts};
  out.fit.diagnostics.nodes = visited;
  out.fit.diagnostics.delta = delta;
  return out;
}

/// Exact r-piece fit by depth-first branch and bound over cut vectors.
/// A node with some leading blocks fixed is bounded below by those blocks'
/// unconstrained least-squares errors plus the best unconstrained
/// partition of the remaining pieces into the remaining blocks.
inline CutFit fit_r_pieces(const PlqFunction& rho, std::size_t r, const FitMode& mode,
                           const SimplifyConfig& cfg = {}) {
  detail::check_inputs(rho, r, mode);
  const std::size_t n = rho.size();
  const double delta = detail::resolve_delta(rho, cfg);
  const double inf = std::numeric_limits<double>::infinity();

  // cost[i][j]: unconstrained error of one block over pieces [i, j)
  std::vector<std::vector<double>> cost(n + 1, std::vector<double>(n + 1, inf));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      if (auto b = detail::make_block(rho, i, j, delta)) cost[i][j] = detail::unconstrained_block_cost(*b);
    }
  }
  // tail[k][i]: best unconstrained partition of pieces [i, n) into k blocks
  std::vector<std::vector<double>> tail(r + 1, std::vector<double>(n + 1, inf));
  tail[0][n] = 0.0;
  for (std::size_t k = 1; k <= r; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = inf;
      for (std::size_t j = i + 1; j <= n; ++j) {
        if (tail[k - 1][j] < inf) best = std::min(best, cost[i][j] + tail[k - 1][j]);
      }
      tail[k][i] = best;
    }
  }

  detail::Incumbent inc;
  inc.floor = 1e-14 * detail::piece_tolerance_scale(rho);
  std::uint64_t nodes = 0;
  bool exhausted = false;
  std::vector<std::size_t> cuts;
  cuts.reserve(r - 1);

  // fixed: bound contribution of the blocks closed so far; start: first piece of the open block
  const auto search = [&](auto&& self, std::size_t start, double fixed) -> void {
    if (exhausted) return;
    if (++nodes > cfg.node_limit) {
      exhausted = true;
      return;
    }
    const std::size_t left = r - 1 - cuts.size();  // cuts still to place
    const double bound = fixed + tail[left + 1][start];
    if (!(bound < inf)) return;
    if (bound * (1.0 - 1e-9) - 1e-14 >= inc.threshold()) return;
    if (left == 0) {
      const CutAssignment ca(n, cuts);
      auto af = detail::fit_assignment(rho, ca, mode, delta);
      if (af.feasible) inc.offer(ca, std::move(af.fit));
      return;
    }
    for (std::size_t c = start + 1; c + left <= n; ++c) {
      if (!(cost[start][c] < inf)) continue;
      cuts.push_back(c);
      self(self, c, fixed + cost[start][c]);
      cuts.pop_back();
      if (exhausted) return;
    }
  };
  search(search, 0, 0.0);

  if (!inc.cuts) {
    if (exhausted) throw Error(ErrorCode::TooLarge, "node limit reached before any feasible assignment");
    detail::no_feasible_assignment(r);
  }
  CutFit out{detail::to_fit_result(rho, *inc.cuts, inc.fit), *inc.cuts};
  out.fit.diagnostics.nodes = nodes;
  out.fit.diagnostics.delta = delta;
  if (exhausted) out.fit.status = FitStatus::BudgetExhausted;
  return out;
}

/// Smallest piece count whose optimal error is strictly below epsilon, by
/// bisection on the greedily merged input. Cut indices and errors refer to
/// the merged function.
inline MinimalFit minimal_pieces(const PlqFunction& rho, const FitMode& mode, const SimplifyConfig& cfg = {}) {
  if (!(cfg.epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be >= 0");
  const PlqFunction merged = greedy_merge(rho, cfg.merge_tol);
  if (mode.shape == Shape::Convex) {
    const FeasibilityClass cls = classify_feasibility(merged);
    if (!cls.feasible()) throw InfeasibleInputError(cls, "no convex function at finite distance");
  }
  const std::size_t n = merged.size();
  int calls = 0;
  std::uint64_t nodes = 0;
  std::optional<CutFit> at_right;
  const auto attempt = [&](std::size_t r) -> std::optional<CutFit> {
    ++calls;
    try {
      CutFit cf = fit_r_pieces(merged, r, mode, cfg);
      nodes += cf.fit.diagnostics.nodes;
      return cf;
    } catch (const InfeasibleInputError&) {
      throw;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InfeasibleInput) return std::nullopt;
      throw;
    }
  };
  std::size_t left = 0, right = n;
  while (right - left > 1) {
    const std::size_t mid = left + (right - left) / 2;
    auto cf = attempt(mid);
    if (cf && cf->fit.squared_error < cfg.epsilon) {
      right = mid;
      at_right = std::move(cf);
    } else {
      left = mid;
    }
  }
  if (!at_right) {
    at_right = attempt(right);
    if (!at_right) detail::no_feasible_assignment(right);
  }
  MinimalFit out{right, std::move(at_right->fit), std::move(at_right->cuts)};
  const double err = out.fit.squared_error;
  if (!(err < cfg.epsilon) && err != 0.0 && out.fit.status == FitStatus::Optimal) {
    out.fit.status = FitStatus::ToleranceUnmet;
  }
  out.fit.diagnostics.fit_calls = calls;
  out.fit.diagnostics.nodes = nodes;
  out.fit.diagnostics.delta = detail::resolve_delta(merged, cfg);
  return out;
}

/// Interior breakpoints where a quadratic spline fails C^1: the value jump
/// exceeds 1e-8 relative or the slope jump exceeds 1e-7 relative.
inline std::optional<std::size_t> first_spline_defect(const PlqFunction& rho) {
  for (std::size_t i = 1; i < rho.size(); ++i) {
    const double x = rho.breakpoint(i).value();
    const QuadCoeffs& l = rho.piece(i - 1);
    const QuadCoeffs& r = rho.piece(i);
    const double lv = l.value(x), ls = l.slope(x);
    if (std::abs(lv - r.value(x)) > 1e-8 * std::max(1.0, std::abs(lv))) return i;
    if (std::abs(ls - r.slope(x)) > 1e-7 * std::max(1.0, std::abs(ls))) return i;
  }
  return std::nullopt;
}

/// Fewest-piece C^1 approximation of a quadratic spline.
inline MinimalFit simplify_spline(const PlqFunction& rho, const SimplifyConfig& cfg = {},
                                  Shape shape = Shape::Free) {
  if (const auto bad = first_spline_defect(rho)) {
    throw Error(ErrorCode::NotASpline,
                "input is not C^1 at x = " + std::to_string(rho.breakpoint(*bad).value()), *bad);
  }
  return minimal_pieces(rho, FitMode{shape, true, false}, cfg);
}

}  // namespace plqkit
