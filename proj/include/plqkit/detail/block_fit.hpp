#pragma once

// Shared QP assembly for every fitting routine: a sequence of contiguous
// blocks, each either pinned to a fixed quadratic or free, fitted to the
// input pieces it covers under continuity and shape constraints.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "plqkit/kkt.hpp"
#include "plqkit/plq.hpp"
#include "plqkit/qp.hpp"

namespace plqkit::detail {

struct SourceSegment {
  QuadCoeffs piece;
  double lo = 0.0;
  double hi = 0.0;
};

struct FitBlock {
  ExtReal lo;
  ExtReal hi;
  /// Bounded input pieces covered by the block, clipped to it.
  std::vector<SourceSegment> sources;
  /// Set for blocks on an unbounded interval.
  std::optional<QuadCoeffs> pinned;
};

struct ShapeRules {
  bool sign = true;      // leading coefficient >= 0
  bool monotone = true;  // slope nondecreasing across joints
  bool smooth = false;   // slope equal across joints
};

/// Box on global coefficients, applied to every free block.
struct CoefficientBox {
  double alpha_lo = 0.0, alpha_hi = 0.0;
  double beta_lo = 0.0, beta_hi = 0.0;
  double gamma_lo = 0.0, gamma_hi = 0.0;
};

struct BlockFit {
  bool feasible = false;
  QpStatus status = QpStatus::Infeasible;
  std::vector<QuadCoeffs> coeffs;  // global coefficients, one per block
  double squared_error = std::numeric_limits<double>::infinity();
  QpProblem problem;
  QpSolution solution;
  KktReport kkt;
  /// Tight sides of the box: alpha lo/hi, beta lo/hi, gamma lo/hi.
  std::array<bool, 6> box_tight{};
  int active_inequalities = 0;
};

/// Local frame x = c + h t mapping the block onto t in [-1, 1].
struct Frame {
  double c = 0.0;
  double h = 1.0;

  static Frame of(double lo, double hi) { return {0.5 * (lo + hi), 0.5 * (hi - lo)}; }
  double to_t(double x) const { return (x - c) / h; }

  QuadCoeffs to_local(const QuadCoeffs& p) const { return {p.a * h * h, p.slope(c) * h, p.value(c)}; }
  QuadCoeffs to_global(const QuadCoeffs& t) const {
    const double alpha = t.a / (h * h);
    const double beta = t.b / h - 2.0 * alpha * c;
    const double gamma = (alpha * c - t.b / h) * c + t.c;
    return {alpha, beta, gamma};
  }
};

/// Moment form of a free block in its local frame, scaled to x-units.
inline QuadraticForm block_form(const FitBlock& b, const Frame& fr) {
  QuadraticForm form;
  for (const auto& s : b.sources) {
    form += segment_error_form(fr.to_local(s.piece), fr.to_t(s.lo), fr.to_t(s.hi)).scaled(fr.h);
  }
  return form;
}

/// Exact squared error of approximating the block's sources by `g` (global).
inline double block_error(const FitBlock& b, const QuadCoeffs& g) {
  double e = 0.0;
  for (const auto& s : b.sources) e += squared_integral(s.piece - g, s.lo, s.hi);
  return e;
}

/// Same, for a local-frame candidate; avoids the global round trip.
inline double block_error_local(const FitBlock& b, const Frame& fr, const QuadCoeffs& theta) {
  double e = 0.0;
  for (const auto& s : b.sources) {
    e += fr.h * squared_integral(fr.to_local(s.piece) - theta, fr.to_t(s.lo), fr.to_t(s.hi));
  }
  return e;
}

/// Least-squares error of a block with every coupling constraint dropped.
inline double unconstrained_block_cost(const FitBlock& b) {
  if (b.pinned) return block_error(b, *b.pinned);
  const Frame fr = Frame::of(b.lo.value(), b.hi.value());
  const QuadraticForm form = block_form(b, fr);
  const Eigen::Vector3d th = form.H.ldlt().solve(form.q);
  return block_error_local(b, fr, {th(0), th(1), th(2)});
}

/// Assembles and solves the block QP. Variables are the local-frame
/// coefficients of the free blocks.
inline BlockFit fit_blocks(std::span<const FitBlock> blocks, ShapeRules rules,
                           const CoefficientBox* box = nullptr, double tol = kQpTol) {
  BlockFit out;
  const std::size_t nb = blocks.size();
  std::vector<Eigen::Index> offset(nb, -1);
  std::vector<Frame> frames(nb);
  Eigen::Index nvar = 0;
  for (std::size_t j = 0; j < nb; ++j) {
    if (blocks[j].pinned) continue;
    offset[j] = nvar;
    frames[j] = Frame::of(blocks[j].lo.value(), blocks[j].hi.value());
    nvar += 3;
  }

  QpProblem& qp = out.problem;
  qp = QpProblem::with_dimension(nvar);
  for (std::size_t j = 0; j < nb; ++j) {
    if (offset[j] < 0) continue;
    const QuadraticForm form = block_form(blocks[j], frames[j]);
    qp.H.block<3, 3>(offset[j], offset[j]) = form.H;
    qp.q.segment<3>(offset[j]) = form.q;
  }

  std::vector<Eigen::VectorXd> eq_rows, in_rows;
  std::vector<double> eq_rhs, in_rhs;
  bool consistent = true;
  const auto push = [&](bool equality, Eigen::VectorXd row, double rhs) {
    if (row.size() == 0 || row.isZero(0.0)) {
      const double scale = std::max(1.0, std::abs(rhs));
      if (equality ? std::abs(rhs) > 1e-9 * scale : rhs < -1e-9 * scale) consistent = false;
      return;
    }
    (equality ? eq_rows : in_rows).push_back(std::move(row));
    (equality ? eq_rhs : in_rhs).push_back(rhs);
  };

  // value / slope of block j at its right (t = +1) or left (t = -1) end:
  // linear part written into `row`, constant part returned
  const auto value_at = [&](std::size_t j, bool right, double x, Eigen::VectorXd& row, double sign) {
    if (offset[j] < 0) return sign * blocks[j].pinned->value(x);
    row(offset[j]) += sign;
    row(offset[j] + 1) += sign * (right ? 1.0 : -1.0);
    row(offset[j] + 2) += sign;
    return 0.0;
  };
  const auto slope_at = [&](std::size_t j, bool right, double x, Eigen::VectorXd& row, double sign) {
    if (offset[j] < 0) return sign * blocks[j].pinned->slope(x);
    const double h = frames[j].h;
    row(offset[j]) += sign * (right ? 2.0 : -2.0) / h;
    row(offset[j] + 1) += sign / h;
    return 0.0;
  };

  for (std::size_t j = 0; j + 1 < nb; ++j) {
    const double x = blocks[j].hi.value();
    {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(nvar);
      const double k = value_at(j, true, x, row, 1.0) + value_at(j + 1, false, x, row, -1.0);
      push(true, std::move(row), -k);
    }
    if (rules.monotone || rules.smooth) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(nvar);
      const double k = slope_at(j, true, x, row, 1.0) + slope_at(j + 1, false, x, row, -1.0);
      push(rules.smooth, std::move(row), -k);
    }
  }
  std::vector<std::pair<std::size_t, Eigen::Index>> sign_rows;  // (block, row in A_in)
  if (rules.sign) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (offset[j] < 0) continue;
      Eigen::VectorXd row = Eigen::VectorXd::Zero(nvar);
      row(offset[j]) = -1.0;
      sign_rows.emplace_back(j, static_cast<Eigen::Index>(in_rows.size()));
      push(false, std::move(row), 0.0);
    }
  }
  // box rows, six per free block, in the order of CoefficientBox
  std::vector<int> box_side;  // parallel to in_rows entries added here
  const std::size_t box_first = in_rows.size();
  if (box) {
    for (std::size_t j = 0; j < nb; ++j) {
      if (offset[j] < 0) continue;
      const double c = frames[j].c;
      const double h = frames[j].h;
      const std::array<Eigen::Vector3d, 3> maps = {
          Eigen::Vector3d(1.0 / (h * h), 0.0, 0.0),
          Eigen::Vector3d(-2.0 * c / (h * h), 1.0 / h, 0.0),
          Eigen::Vector3d(c * c / (h * h), -c / h, 1.0)};
      const std::array<double, 6> bounds = {box->alpha_lo, box->alpha_hi, box->beta_lo,
                                            box->beta_hi,  box->gamma_lo, box->gamma_hi};
      for (int side = 0; side < 6; ++side) {
        // alpha >= 0 already present as the sign row
        if (side == 0 && rules.sign && box->alpha_lo <= 0.0) continue;
        Eigen::VectorXd row = Eigen::VectorXd::Zero(nvar);
        const double sgn = (side % 2 == 0) ? -1.0 : 1.0;
        row.segment<3>(offset[j]) = sgn * maps[static_cast<std::size_t>(side / 2)];
        in_rows.push_back(std::move(row));
        in_rhs.push_back(sgn * bounds[static_cast<std::size_t>(side)]);
        box_side.push_back(side);
      }
    }
  }

  if (!consistent) return out;

  qp.A_eq.resize(static_cast<Eigen::Index>(eq_rows.size()), nvar);
  qp.b_eq.resize(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t i = 0; i < eq_rows.size(); ++i) {
    qp.A_eq.row(static_cast<Eigen::Index>(i)) = eq_rows[i].transpose();
    qp.b_eq(static_cast<Eigen::Index>(i)) = eq_rhs[i];
  }
  qp.A_in.resize(static_cast<Eigen::Index>(in_rows.size()), nvar);
  qp.b_in.resize(static_cast<Eigen::Index>(in_rows.size()));
  for (std::size_t i = 0; i < in_rows.size(); ++i) {
    qp.A_in.row(static_cast<Eigen::Index>(i)) = in_rows[i].transpose();
    qp.b_in(static_cast<Eigen::Index>(i)) = in_rhs[i];
  }

  // Solve in variables sqrt(h) * theta so that every block's Hessian is O(1)
  // regardless of its length; short blocks would otherwise sit below the
  // solver tolerance.
  Eigen::VectorXd D(nvar);
  for (std::size_t j = 0; j < nb; ++j) {
    if (offset[j] >= 0) D.segment<3>(offset[j]).setConstant(1.0 / std::sqrt(frames[j].h));
  }
  // `pinned` lists inequality rows solved as equalities
  const auto solve_scaled = [&](const std::vector<Eigen::Index>& pinned) {
    QpProblem scaled = qp;
    if (!pinned.empty()) {
      const Eigen::Index me = qp.A_eq.rows();
      scaled.A_eq.conservativeResize(me + static_cast<Eigen::Index>(pinned.size()), nvar);
      scaled.b_eq.conservativeResize(me + static_cast<Eigen::Index>(pinned.size()));
      for (std::size_t k = 0; k < pinned.size(); ++k) {
        scaled.A_eq.row(me + static_cast<Eigen::Index>(k)) = qp.A_in.row(pinned[k]);
        scaled.b_eq(me + static_cast<Eigen::Index>(k)) = qp.b_in(pinned[k]);
      }
      // a pinned row stays in A_in with a slack rhs so indices keep their meaning
      for (Eigen::Index i : pinned) scaled.b_in(i) = 1.0;
    }
    scaled.H = D.asDiagonal() * qp.H * D.asDiagonal();
    scaled.q = D.cwiseProduct(qp.q);
    scaled.A_eq = scaled.A_eq * D.asDiagonal();
    scaled.A_in = scaled.A_in * D.asDiagonal();
    QpSolution sol = solve_qp(scaled, tol);
    if (sol.status != QpStatus::Optimal || pinned.empty()) return sol;
    const Eigen::Index me = qp.A_eq.rows();
    for (std::size_t k = 0; k < pinned.size(); ++k) {
      sol.mu_in(pinned[k]) = sol.lambda_eq(me + static_cast<Eigen::Index>(k));
      sol.active_inequalities.push_back(pinned[k]);
    }
    sol.lambda_eq.conservativeResize(me);
    return sol;
  };
  out.solution = solve_scaled({});
  // Inactive rows are only enforced to the solver tolerance, which on a
  // short block leaves a visibly negative curvature. Such rows are active in
  // all but name; solving again with them as equalities makes them exact.
  if (out.solution.status == QpStatus::Optimal) {
    std::vector<Eigen::Index> slipped;
    for (const auto& [j, row] : sign_rows) {
      if (D(offset[j]) * out.solution.theta(offset[j]) < 0.0) slipped.push_back(row);
    }
    if (!slipped.empty()) {
      QpSolution again = solve_scaled(slipped);
      if (again.status == QpStatus::Optimal) out.solution = std::move(again);
    }
  }
  out.status = out.solution.status;
  if (out.status != QpStatus::Optimal) return out;
  out.solution.theta = D.cwiseProduct(out.solution.theta);
  out.solution.objective = qp.objective(out.solution.theta);
  out.kkt = kkt_residual(qp, out.solution);
  out.active_inequalities = static_cast<int>(out.solution.active_inequalities.size());
  out.feasible = true;

  const double obj_scale = std::max(1.0, std::abs(out.solution.objective));
  for (std::size_t k = 0; k < box_side.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(box_first + k);
    if (out.solution.mu_in(row) * qp.A_in.row(row).norm() > 1e-10 * obj_scale) {
      out.box_tight[static_cast<std::size_t>(box_side[k])] = true;
    }
  }

  out.coeffs.resize(nb);
  out.squared_error = 0.0;
  for (std::size_t j = 0; j < nb; ++j) {
    if (offset[j] < 0) {
      out.coeffs[j] = *blocks[j].pinned;
      out.squared_error += block_error(blocks[j], *blocks[j].pinned);
      continue;
    }
    const auto th = out.solution.theta.segment<3>(offset[j]);
    // after the polish a negative curvature is roundoff on an exact zero
    const QuadCoeffs local{rules.sign ? std::max(th(0), 0.0) : th(0), th(1), th(2)};
    out.coeffs[j] = frames[j].to_global(local);
    out.squared_error += block_error_local(blocks[j], frames[j], local);
  }
  return out;
}

}  // namespace plqkit::detail
