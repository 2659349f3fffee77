#pragma once

// Closest convex PLQ function in L2: fixed breakpoints (one convex QP) and
// variable breakpoints (multistart alternating minimization).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "plqkit/analysis.hpp"
#include "plqkit/detail/block_fit.hpp"
#include "plqkit/plq.hpp"

namespace plqkit {

enum class FitStatus { Optimal, NoImprovement, BoundSaturated, BudgetExhausted, ToleranceUnmet };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Optimal: return "Optimal";
    case FitStatus::NoImprovement: return "NoImprovement";
    case FitStatus::BoundSaturated: return "BoundSaturated";
    case FitStatus::BudgetExhausted: return "BudgetExhausted";
    case FitStatus::ToleranceUnmet: return "ToleranceUnmet";
  }
  return "Unknown";
}

struct FitDiagnostics {
  int iterations = 0;          // outer iterations (variable breakpoints) summed over restarts
  int restarts = 0;
  int best_restart = -1;       // -1 when the fixed-breakpoint start won
  long qp_solves = 0;
  int qp_iterations = 0;       // of the final QP
  int active_constraints = 0;  // active inequalities of the final QP
  KktReport kkt;               // of the final QP
  bool extended = false;       // tail breakpoints were inserted
  double padding = 0.0;        // final bound padding N
  std::vector<std::vector<double>> traces;  // objective per outer iteration, per restart
  std::uint64_t nodes = 0;     // branch-and-bound nodes
  int fit_calls = 0;           // fixed-count fits issued by a search
  double delta = 0.0;          // effective minimum breakpoint gap, when one applies
};

struct FitResult {
  PlqFunction g;
  double squared_error = 0.0;
  FitStatus status = FitStatus::Optimal;
  FitDiagnostics diagnostics;
};

/// Box on the coefficients of every free piece of a variable-breakpoint fit.
struct BoundBox {
  double alpha_lo = 0.0, alpha_hi = 0.0;
  double beta_lo = 0.0, beta_hi = 0.0;
  double gamma_lo = 0.0, gamma_hi = 0.0;
  double padding = 1000.0;
  double t1 = 0.0, t2 = 0.0;
};

struct ProjectionConfig {
  /// Minimum breakpoint gap; defaults to 1e-6 times the bounded core width.
  std::optional<double> delta;
  double padding = 1000.0;
  int restarts = 8;
  double inner_tol = 1e-9;
  int max_outer = 50;
  int golden_iters = 25;
  int max_doublings = 10;
  std::uint64_t seed = 0;
  /// Worker cap; 0 reads PLQKIT_THREADS, then falls back to the hardware count.
  int threads = 0;
};

namespace detail {

inline bool bridgeable(const QuadCoeffs& L, double p, const QuadCoeffs& R, double q) {
  const auto le = [](double u, double v) { return u <= v + 1e-9 * std::max({1.0, std::abs(u), std::abs(v)}); };
  if (p == q) {
    const double lv = L.value(p), rv = R.value(p);
    return std::abs(lv - rv) <= 1e-9 * std::max({1.0, std::abs(lv), std::abs(rv)}) && le(L.slope(p), R.slope(p));
  }
  const double chord = (R.value(q) - L.value(p)) / (q - p);
  return le(L.slope(p), chord) && le(chord, R.slope(q));
}

struct Prepared {
  PlqFunction f;
  bool extended = false;
};

/// Feasibility classification followed by tail extension: when both tails
/// are unbounded, the bounded middle must admit a convex bridge from the
/// left tail to the right one (slope of the chord between the tail slopes).
/// Tails with positive curvature are pushed outward by 1, 2, 4, ... until it does.
inline Prepared prepare_for_projection(const PlqFunction& f) {
  const FeasibilityClass cls = classify_feasibility(f);
  if (!cls.feasible()) throw InfeasibleInputError(cls, "no convex function at finite distance");
  const std::size_t m = f.size();
  if (m < 2 || !f.unbounded_left() || !f.unbounded_right()) return {f, false};
  const QuadCoeffs& L = f.piece(0);
  const QuadCoeffs& R = f.piece(m - 1);
  const double x2 = f.breakpoint(1).value();
  const double xm = f.breakpoint(m - 1).value();
  if (bridgeable(L, x2, R, xm)) return {f, false};
  const bool move_left = L.a > 0;
  const bool move_right = R.a > 0;
  if (move_left || move_right) {
    double d = 1.0;
    for (int k = 0; k < 64; ++k, d *= 2.0) {
      const double p = move_left ? x2 - d : x2;
      const double q = move_right ? xm + d : xm;
      if (bridgeable(L, p, R, q)) {
        return {insert_tail_breakpoints(f, move_left ? std::optional(p) : std::nullopt,
                                        move_right ? std::optional(q) : std::nullopt),
                true};
      }
    }
  }
  FeasibilityClass gap;
  gap.tag = FeasibilityClass::Tag::SlopeGapUnbounded;
  gap.detail = {0, m - 1};
  throw InfeasibleInputError(gap, "affine tails cannot be joined by a convex function");
}

/// One block per interval of `grid`; `grid` must contain every breakpoint of f.
inline std::vector<FitBlock> blocks_on_grid(const PlqFunction& f, std::span<const ExtReal> grid) {
  std::vector<FitBlock> blocks;
  blocks.reserve(grid.size() - 1);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    FitBlock b{grid[k], grid[k + 1], {}, std::nullopt};
    if (!grid[k].is_finite()) {
      b.pinned = f.piece(0);
    } else if (!grid[k + 1].is_finite()) {
      b.pinned = f.piece(f.size() - 1);
    } else {
      const double lo = grid[k].value(), hi = grid[k + 1].value();
      const auto idx = piece_containing(f, 0.5 * (lo + hi));
      b.sources.push_back({f.piece(idx.value_or(0)), lo, hi});
    }
    blocks.push_back(std::move(b));
  }
  return blocks;
}

inline PlqFunction assemble(std::vector<ExtReal> grid, std::vector<QuadCoeffs> coeffs) {
  return validate_plq(std::move(grid), std::move(coeffs), kNoContinuityCheck);
}

inline double bounded_core_width(const PlqFunction& f) {
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (const auto& b : f.breakpoints()) {
    if (!b.is_finite()) continue;
    lo = std::min(lo, b.value());
    hi = std::max(hi, b.value());
  }
  return hi > lo ? hi - lo : 1.0;
}

inline int worker_count(int requested, int jobs) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("PLQKIT_THREADS")) n = std::atoi(env);
  }
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, jobs));
}

/// Runs job(i) for i in [0, jobs) on up to `workers` threads; rethrows the
/// first failure by job index.
template <class Job>
void run_parallel(int jobs, int workers, Job&& job) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  std::atomic<int> next{0};
  const auto loop = [&] {
    for (int i = next++; i < jobs; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    loop();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(loop);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Algorithm 1: convex QP on the breakpoints of f (after tail extension).
inline FitResult closest_convex_fixed(const PlqFunction& f) {
  const detail::Prepared prep = detail::prepare_for_projection(f);
  const auto grid = prep.f.breakpoint_vector();
  const auto blocks = detail::blocks_on_grid(prep.f, grid);
  const detail::BlockFit fit = detail::fit_blocks(blocks, detail::ShapeRules{});
  if (!fit.feasible) {
    throw Error(ErrorCode::InfeasibleInput,
                std::string("fixed-breakpoint QP ended with status ") + to_string(fit.status));
  }
  FitResult out{detail::assemble(grid, fit.coeffs), fit.squared_error, FitStatus::Optimal, {}};
  out.diagnostics.qp_solves = 1;
  out.diagnostics.qp_iterations = fit.solution.iterations;
  out.diagnostics.active_constraints = fit.active_inequalities;
  out.diagnostics.kkt = fit.kkt;
  out.diagnostics.extended = prep.extended;
  return out;
}

/// Inserts k equally spaced breakpoints inside every bounded piece.
inline PlqFunction refine_function(const PlqFunction& f, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "refinement count must be >= 1");
  std::vector<ExtReal> bps{f.lower()};
  std::vector<QuadCoeffs> pcs;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const ExtReal& lo = f.breakpoint(i);
    const ExtReal& hi = f.breakpoint(i + 1);
    const int parts = lo.is_finite() && hi.is_finite() ? k + 1 : 1;
    for (int j = 1; j < parts; ++j) {
      const double t = static_cast<double>(j) / parts;
      bps.emplace_back(lo.value() + t * (hi.value() - lo.value()));
      pcs.push_back(f.piece(i));
    }
    bps.push_back(hi);
    pcs.push_back(f.piece(i));
  }
  return validate_plq(std::move(bps), std::move(pcs), kNoContinuityCheck);
}

/// Breakpoints of an n-piece refinement of f: every bounded piece is split
/// into equal parts, with the part counts proportional to piece length
/// (largest remainder, at least one each). Unbounded pieces count towards n.
inline std::vector<ExtReal> initial_refinement(const PlqFunction& f, int n) {
  std::vector<std::size_t> core;
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f.breakpoint(i).is_finite() && f.breakpoint(i + 1).is_finite()) {
      core.push_back(i);
      total += f.breakpoint(i + 1).value() - f.breakpoint(i).value();
    }
  }
  const int pins = static_cast<int>(f.size() - core.size());
  const int budget = n - pins;
  if (budget < static_cast<int>(core.size()) || (core.empty() && budget != 0)) {
    throw Error(ErrorCode::InvalidArgument,
                "cannot refine " + std::to_string(f.size()) + " pieces into " + std::to_string(n));
  }
  std::vector<int> parts(core.size(), 1);
  const int spare = budget - static_cast<int>(core.size());
  std::vector<std::pair<double, std::size_t>> rem;
  int used = 0;
  for (std::size_t j = 0; j < core.size(); ++j) {
    const double len = f.breakpoint(core[j] + 1).value() - f.breakpoint(core[j]).value();
    const double share = spare * len / total;
    parts[j] += static_cast<int>(std::floor(share));
    used += static_cast<int>(std::floor(share));
    rem.emplace_back(share - std::floor(share), j);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& l, const auto& r) { return l.first > r.first; });
  for (int k = 0; k < spare - used; ++k) ++parts[rem[static_cast<std::size_t>(k)].second];

  std::vector<ExtReal> grid{f.lower()};
  std::size_t j = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const ExtReal& lo = f.breakpoint(i);
    const ExtReal& hi = f.breakpoint(i + 1);
    if (j < core.size() && core[j] == i) {
      for (int s = 1; s < parts[j]; ++s) {
        grid.emplace_back(lo.value() + (hi.value() - lo.value()) * s / parts[j]);
      }
      ++j;
    }
    grid.push_back(hi);
  }
  return grid;
}

/// Coefficient box for the variable-breakpoint problem. The intercept
/// bounds use tangents at the extension points when both tails are
/// unbounded, otherwise at x_1 (x_2 when x_1 = -inf) and x_m.
inline BoundBox coefficient_bounds(const PlqFunction& f, double padding = 1000.0) {
  BoundBox box;
  box.padding = padding;
  double amax = 0.0;
  double bmin = HUGE_VAL, bmax = -HUGE_VAL;
  for (const auto& p : f.pieces()) {
    amax = std::max(amax, p.a);
    bmin = std::min(bmin, p.b);
    bmax = std::max(bmax, p.b);
  }
  box.alpha_lo = 0.0;
  box.alpha_hi = amax;
  box.beta_lo = bmin - padding;
  box.beta_hi = bmax + padding;

  PlqFunction h = f;
  if (classify_feasibility(f).feasible()) {
    try {
      h = detail::prepare_for_projection(f).f;
    } catch (const InfeasibleInputError&) {
    }
  }
  const std::size_t m = h.size();
  const QuadCoeffs& first = h.piece(0);
  const QuadCoeffs& last = h.piece(m - 1);
  double p, q;
  if (f.unbounded_left() && f.unbounded_right() && m >= 3 && !(h == f)) {
    p = h.breakpoint(1).value();
    q = h.breakpoint(m - 1).value();
  } else {
    p = h.lower().is_finite() ? h.lower().value() : (m > 1 ? h.breakpoint(1).value() : 0.0);
    q = m > 1 ? h.breakpoint(m - 1).value() : (h.upper().is_finite() ? h.upper().value() : p);
  }
  box.t1 = first.value(p) - first.slope(p) * p;
  box.t2 = last.value(q) - last.slope(q) * q;

  double fmax = -HUGE_VAL;
  for (std::size_t i = 0; i < f.breakpoints().size(); ++i) {
    const ExtReal& x = f.breakpoint(i);
    if (!x.is_finite()) continue;
    const QuadCoeffs& piece = f.piece(i == 0 ? 0 : i - 1);
    fmax = std::max(fmax, piece.value(x.value()));
  }
  if (!std::isfinite(fmax)) fmax = std::max(box.t1, box.t2);
  box.gamma_hi = fmax;
  box.gamma_lo = std::min({box.t1, box.t2, fmax});
  return box;
}

namespace detail {

struct RestartOutcome {
  std::vector<ExtReal> grid;
  BlockFit fit;
  std::vector<double> trace;
  int iterations = 0;
  long solves = 0;
  double padding = 0.0;
  bool saturated = false;
};

inline CoefficientBox to_box(const BoundBox& b) {
  return {b.alpha_lo, b.alpha_hi, b.beta_lo, b.beta_hi, b.gamma_lo, b.gamma_hi};
}

/// Coordinate descent on the free breakpoints of `grid`; the value at a grid
/// is the optimum of the fixed-breakpoint QP inside the coefficient box.
inline RestartOutcome descend(const PlqFunction& f, std::vector<ExtReal> grid, std::vector<bool> free,
                              BoundBox bounds, double delta, const ProjectionConfig& cfg) {
  RestartOutcome out;
  CoefficientBox box = to_box(bounds);
  double N = bounds.padding;
  int doublings = 0;
  const auto solve = [&](const std::vector<ExtReal>& g) {
    ++out.solves;
    return fit_blocks(blocks_on_grid(f, g), ShapeRules{}, &box);
  };
  // widens every tight side (except the sign bound) until none is tight or the cap is hit
  const auto settle = [&](BlockFit fit) {
    while (fit.feasible) {
      const auto& t = fit.box_tight;
      if (!(t[1] || t[2] || t[3] || t[4] || t[5])) break;
      if (doublings >= cfg.max_doublings) {
        out.saturated = true;
        break;
      }
      if (t[1]) box.alpha_hi += N;
      if (t[2]) box.beta_lo -= N;
      if (t[3]) box.beta_hi += N;
      if (t[4]) box.gamma_lo -= N;
      if (t[5]) box.gamma_hi += N;
      N *= 2.0;
      ++doublings;
      fit = solve(grid);
    }
    return fit;
  };

  BlockFit cur = settle(solve(grid));
  if (!cur.feasible) throw Error(ErrorCode::InfeasibleInput, "initial breakpoints give an infeasible QP");
  out.trace.push_back(cur.squared_error);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    const double before = cur.squared_error;
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
      if (!free[i]) continue;
      const double lo = grid[i - 1].value() + delta;
      const double hi = grid[i + 1].value() - delta;
      if (!(lo < hi)) continue;
      auto trial = grid;
      const auto value_at = [&](double x) {
        trial[i] = ExtReal(x);
        BlockFit r = solve(trial);
        return std::pair{r.feasible ? r.squared_error : HUGE_VAL, std::move(r)};
      };
      double a = lo, b = hi;
      double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
      auto r1 = value_at(x1);
      auto r2 = value_at(x2);
      double best_x = grid[i].value();
      double best_v = cur.squared_error;
      BlockFit best_fit;
      bool improved = false;
      const auto consider = [&](double x, std::pair<double, BlockFit>& r) {
        if (r.first < best_v) {
          best_v = r.first;
          best_x = x;
          best_fit = r.second;
          improved = true;
        }
      };
      consider(x1, r1);
      consider(x2, r2);
      for (int it = 0; it < cfg.golden_iters; ++it) {
        if (r1.first <= r2.first) {
          b = x2;
          x2 = x1;
          r2 = std::move(r1);
          x1 = b - phi * (b - a);
          r1 = value_at(x1);
          consider(x1, r1);
        } else {
          a = x1;
          x1 = x2;
          r1 = std::move(r2);
          x2 = a + phi * (b - a);
          r2 = value_at(x2);
          consider(x2, r2);
        }
      }
      if (improved) {
        grid[i] = ExtReal(best_x);
        cur = std::move(best_fit);
      }
    }
    cur = settle(std::move(cur));
    out.trace.push_back(cur.squared_error);
    ++out.iterations;
    if (before - cur.squared_error <= cfg.inner_tol * std::max(before, 1e-300)) break;
  }
  out.grid = std::move(grid);
  out.fit = std::move(cur);
  out.padding = N;
  return out;
}

}  // namespace detail

/// Algorithm 2: n-piece convex fit whose breakpoints include those of f and
/// may otherwise move, at least delta apart. Returns the best of
/// cfg.restarts descents and of the fixed-breakpoint fit on the uniform
/// initial refinement (flagged NoImprovement when that start wins).
inline FitResult closest_convex_variable(const PlqFunction& f, int n, const ProjectionConfig& cfg = {}) {
  if (n < 2 * static_cast<int>(f.size())) {
    throw Error(ErrorCode::InvalidArgument, "need n >= 2m pieces");
  }
  if (cfg.restarts < 1) throw Error(ErrorCode::InvalidArgument, "restarts must be >= 1");
  const detail::Prepared prep = detail::prepare_for_projection(f);
  const PlqFunction& fe = prep.f;
  const double delta = cfg.delta.value_or(1e-6 * detail::bounded_core_width(fe));
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidArgument, "delta must be positive");

  const std::vector<ExtReal> base = initial_refinement(fe, n);
  std::vector<bool> free(base.size(), true);
  {
    std::size_t k = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      while (k < fe.breakpoints().size() && fe.breakpoint(k) < base[i]) ++k;
      free[i] = !(k < fe.breakpoints().size() && fe.breakpoint(k) == base[i]);
    }
  }
  for (std::size_t i = 0; i + 1 < base.size(); ++i) {
    if (base[i].is_finite() && base[i + 1].is_finite() && base[i + 1].value() - base[i].value() < delta) {
      throw Error(ErrorCode::InvalidArgument, "delta exceeds the uniform spacing of the refinement");
    }
  }
  const BoundBox bounds = coefficient_bounds(f, cfg.padding);

  // restart 0 is the uniform refinement; the others jitter each bounded piece's
  // sub-intervals with a symmetric Dirichlet(2) draw mixed half-and-half with uniform
  const auto start_grid = [&](int r) {
    if (r == 0) return base;
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(r)};
    std::mt19937_64 rng(seq);
    std::gamma_distribution<double> gamma(2.0, 1.0);
    std::vector<ExtReal> g = base;
    std::size_t i = 0;
    while (i + 1 < g.size()) {
      if (!g[i].is_finite()) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < g.size() && free[j]) ++j;
      if (j >= g.size() || !g[j].is_finite()) break;
      const std::size_t k = j - i;
      if (k > 1) {
        std::vector<double> w(k);
        double s = 0.0;
        for (auto& x : w) s += (x = gamma(rng));
        const double lo = g[i].value(), len = g[j].value() - lo;
        double acc = lo;
        for (std::size_t t = 0; t + 1 < k; ++t) {
          acc += len * (0.5 / static_cast<double>(k) + 0.5 * w[t] / s);
          g[i + 1 + t] = ExtReal(acc);
        }
      }
      i = j;
    }
    for (std::size_t t = 0; t + 1 < g.size(); ++t) {
      if (g[t].is_finite() && g[t + 1].is_finite() && g[t + 1].value() - g[t].value() < delta) return base;
    }
    return g;
  };

  std::vector<detail::RestartOutcome> outcomes(static_cast<std::size_t>(cfg.restarts));
  detail::run_parallel(cfg.restarts, detail::worker_count(cfg.threads, cfg.restarts), [&](int r) {
    outcomes[static_cast<std::size_t>(r)] = detail::descend(fe, start_grid(r), free, bounds, delta, cfg);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < outcomes.size(); ++r) {
    if (outcomes[r].fit.squared_error < outcomes[best].fit.squared_error) best = r;
  }
  FitResult initial = closest_convex_fixed(restrict_to(fe, base));

  FitDiagnostics diag;
  diag.restarts = cfg.restarts;
  diag.extended = prep.extended;
  diag.delta = delta;
  for (const auto& o : outcomes) {
    diag.iterations += o.iterations;
    diag.qp_solves += o.solves;
    diag.traces.push_back(o.trace);
  }
  const auto& win = outcomes[best];
  // gains at roundoff level do not count as an improvement
  if (!(win.fit.squared_error < initial.squared_error - 1e-12 * std::max(1.0, initial.squared_error))) {
    initial.status = FitStatus::NoImprovement;
    diag.qp_solves += 1;
    diag.best_restart = -1;
    diag.qp_iterations = initial.diagnostics.qp_iterations;
    diag.active_constraints = initial.diagnostics.active_constraints;
    diag.kkt = initial.diagnostics.kkt;
    diag.padding = win.padding;
    initial.diagnostics = std::move(diag);
    return initial;
  }
  diag.best_restart = static_cast<int>(best);
  diag.qp_iterations = win.fit.solution.iterations;
  diag.active_constraints = win.fit.active_inequalities;
  diag.kkt = win.fit.kkt;
  diag.padding = win.padding;
  return FitResult{detail::assemble(win.grid, win.fit.coeffs), win.fit.squared_error,
                   win.saturated ? FitStatus::BoundSaturated : FitStatus::Optimal, std::move(diag)};
}

}  // namespace plqkit
