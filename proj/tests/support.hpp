#pragma once

// Test-only helpers: pointwise quadrature oracle, random PLQ generators and
// the named functions used across suites.

#include <cmath>
#include <random>
#include <vector>

#include "plqkit/plq.hpp"

namespace testsupport {

using plqkit::ExtReal;
using plqkit::PlqFunction;
using plqkit::QuadCoeffs;

/// Composite three-point Gauss-Legendre rule on [lo, hi] with `cells`
/// subintervals, evaluating both functions only through eval(). Exact for
/// squared differences of quadratics on cells free of breakpoints.
inline double quad_sq_distance(const PlqFunction& f, const PlqFunction& g, double lo, double hi,
                               int cells = 2000) {
  static const double node = std::sqrt(0.6);
  static const double w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
  const double t[3] = {-node, 0.0, node};
  const double step = (hi - lo) / cells;
  double total = 0.0;
  for (int k = 0; k < cells; ++k) {
    const double c = lo + (k + 0.5) * step;
    for (int j = 0; j < 3; ++j) {
      const double x = c + 0.5 * step * t[j];
      const double d = plqkit::eval(f, x).to_double() - plqkit::eval(g, x).to_double();
      total += w[j] * 0.5 * step * d * d;
    }
  }
  return total;
}

/// Breakpoints merged from both functions so the quadrature never straddles a kink.
inline double exact_by_quadrature(const PlqFunction& f, const PlqFunction& g) {
  std::vector<double> xs;
  for (const auto* h : {&f, &g}) {
    for (const auto& b : h->breakpoints()) {
      if (b.is_finite()) xs.push_back(b.value());
    }
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    if (xs[i + 1] - xs[i] > 1e-14) total += quad_sq_distance(f, g, xs[i], xs[i + 1], 4);
  }
  return total;
}

/// f of the paper's worked example, discontinuous at 6 as printed.
inline PlqFunction eq23() {
  return plqkit::validate_plq({ExtReal::neg_inf(), 1.0, 2.5, 6.0, ExtReal::pos_inf()},
                              {{0.5, 0, 1}, {0, 2, -0.5}, {0, -1, 7}, {1, 0, -5}},
                              plqkit::kNoContinuityCheck);
}

inline PlqFunction single(QuadCoeffs p, ExtReal lo, ExtReal hi) {
  return plqkit::validate_plq({lo, hi}, {p});
}

/// x^2 (scaled by `a`) on (lo, hi] split into `n` equal pieces.
inline PlqFunction split_quadratic(QuadCoeffs p, double lo, double hi, int n) {
  std::vector<ExtReal> bps;
  std::vector<QuadCoeffs> pcs;
  for (int i = 0; i <= n; ++i) bps.emplace_back(lo + (hi - lo) * i / n);
  for (int i = 0; i < n; ++i) pcs.push_back(p);
  return plqkit::validate_plq(std::move(bps), std::move(pcs));
}

/// Random continuous PLQ on a bounded interval, pieces chained so the value
/// matches at each breakpoint.
inline PlqFunction random_continuous(std::mt19937_64& rng, int m, bool convex, double lo = -3.0,
                                     double width = 6.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> cuts;
  for (int i = 0; i < m - 1; ++i) cuts.push_back(lo + width * (0.05 + 0.9 * u(rng)));
  std::sort(cuts.begin(), cuts.end());
  std::vector<ExtReal> bps{lo};
  double prev = lo;
  for (double c : cuts) {
    if (c - prev < 1e-3 * width) c = prev + 1e-3 * width;
    bps.emplace_back(c);
    prev = c;
  }
  bps.emplace_back(std::max(lo + width, prev + 1e-3 * width));

  std::vector<QuadCoeffs> pcs;
  double slope = -4.0 + 8.0 * u(rng);
  double value = -2.0 + 4.0 * u(rng);
  for (int i = 0; i < m; ++i) {
    const double x0 = bps[static_cast<std::size_t>(i)].value();
    const double x1 = bps[static_cast<std::size_t>(i) + 1].value();
    const double a = convex ? 2.0 * u(rng) * (u(rng) < 0.3 ? 0.0 : 1.0) : -2.0 + 4.0 * u(rng);
    // a (x - x0)^2 + slope (x - x0) + value
    const QuadCoeffs p{a, slope - 2.0 * a * x0, a * x0 * x0 - slope * x0 + value};
    pcs.push_back(p);
    value = p.value(x1);
    slope = p.slope(x1);
    if (convex) {
      slope += 3.0 * u(rng) * (u(rng) < 0.5 ? 1.0 : 0.0);
    } else {
      slope += -3.0 + 6.0 * u(rng);
    }
  }
  return plqkit::validate_plq(std::move(bps), std::move(pcs));
}

}  // namespace testsupport
