#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "plqkit/error.hpp"
#include "plqkit/qp.hpp"

namespace plqkit {

/// Scaled KKT residuals of a QP solution. Each entry is dimensionless:
/// stationarity and dual sign violations (mu_i |a_i|) are divided by
/// g = max(1, |2 H theta|_inf, |2 q|_inf), row residuals by max(|a_i|_2, |b_i|),
/// and complementarity |mu_i slack_i| by g * max(1, |theta|_inf).
struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

/// Checks a candidate (theta, lambda, mu) against the KKT conditions using
/// only the problem data; nothing here depends on how the solution was found.
inline KktReport kkt_residual(const QpProblem& p, const QpSolution& s) {
  const Eigen::Index n = p.q.size();
  if (s.theta.size() != n || s.lambda_eq.size() != p.A_eq.rows() || s.mu_in.size() != p.A_in.rows() ||
      p.H.rows() != n || p.H.cols() != n || p.A_eq.cols() != n || p.A_in.cols() != n ||
      p.b_eq.size() != p.A_eq.rows() || p.b_in.size() != p.A_in.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "solution does not match problem dimensions");
  }
  KktReport r;
  if (n == 0) return r;

  const Eigen::VectorXd Ht = 2.0 * (p.H * s.theta);
  Eigen::VectorXd grad = Ht - 2.0 * p.q;
  if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * s.lambda_eq;
  if (p.A_in.rows() > 0) grad += p.A_in.transpose() * s.mu_in;
  const double gscale = std::max({1.0, Ht.cwiseAbs().maxCoeff(), 2.0 * p.q.cwiseAbs().maxCoeff()});
  r.stationarity = grad.cwiseAbs().maxCoeff() / gscale;
  const double tscale = std::max(1.0, s.theta.cwiseAbs().maxCoeff());

  const auto row_scale = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::Index i) {
    return std::max({1e-300, A.row(i).norm(), std::abs(b(i))});
  };
  for (Eigen::Index i = 0; i < p.A_eq.rows(); ++i) {
    const double res = std::abs(p.A_eq.row(i).dot(s.theta) - p.b_eq(i));
    r.primal = std::max(r.primal, res / row_scale(p.A_eq, p.b_eq, i));
  }
  for (Eigen::Index i = 0; i < p.A_in.rows(); ++i) {
    const double slack = p.b_in(i) - p.A_in.row(i).dot(s.theta);
    const double sc = row_scale(p.A_in, p.b_in, i);
    r.primal = std::max(r.primal, std::max(0.0, -slack) / sc);
    const double an = std::max(1e-300, p.A_in.row(i).norm());
    r.dual = std::max(r.dual, std::max(0.0, -s.mu_in(i)) * an / gscale);
    r.complementarity = std::max(r.complementarity, std::abs(s.mu_in(i) * slack) / (gscale * tscale));
  }
  return r;
}

}  // namespace plqkit
