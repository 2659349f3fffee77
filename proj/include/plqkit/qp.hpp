#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "plqkit/error.hpp"

namespace plqkit {

/// minimize theta^T H theta - 2 q^T theta
/// subject to A_eq theta = b_eq, A_in theta <= b_in.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd q;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;

  /// Empty problem in `n` variables with no constraints.
  static QpProblem with_dimension(Eigen::Index n) {
    QpProblem p;
    p.H = Eigen::MatrixXd::Zero(n, n);
    p.q = Eigen::VectorXd::Zero(n);
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
    p.A_in.resize(0, n);
    p.b_in.resize(0);
    return p;
  }

  Eigen::Index dim() const { return q.size(); }

  double objective(const Eigen::VectorXd& theta) const {
    return theta.dot(H * theta) - 2.0 * q.dot(theta);
  }

  void check_dimensions() const {
    const Eigen::Index n = dim();
    const bool ok = H.rows() == n && H.cols() == n && A_eq.cols() == n && A_in.cols() == n &&
                    A_eq.rows() == b_eq.size() && A_in.rows() == b_in.size();
    if (!ok) throw Error(ErrorCode::DimensionMismatch, "inconsistent QP dimensions");
    if (n > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H.cwiseAbs().maxCoeff())) {
      throw Error(ErrorCode::InvalidArgument, "H is not symmetric");
    }
  }
};

enum class QpStatus { Optimal, Infeasible, IterationLimit };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "Optimal";
    case QpStatus::Infeasible: return "Infeasible";
    case QpStatus::IterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

/// Multipliers follow 2 H theta - 2 q + A_eq^T lambda + A_in^T mu = 0, mu >= 0.
struct QpSolution {
  Eigen::VectorXd theta;
  Eigen::VectorXd lambda_eq;
  Eigen::VectorXd mu_in;
  QpStatus status = QpStatus::Optimal;
  double objective = 0.0;
  int iterations = 0;
  std::vector<Eigen::Index> active_inequalities;
};

inline constexpr double kQpTol = 1e-9;

namespace detail {

// Goldfarb-Idnani dual active-set method on
//   min 1/2 x^T G x + g0^T x  s.t.  n_i^T x = b_i (i < p),  n_i^T x >= b_i (i >= p)
// with unit-norm constraint normals. G must be positive definite.
//
// The factorization keeps J = L^{-T} Q and an upper-triangular R with
// L^{-1} N_active = Q [R; 0], where G = L L^T.
class DualActiveSet {
 public:
  DualActiveSet(const Eigen::MatrixXd& G, const Eigen::VectorXd& g0, const Eigen::MatrixXd& normals,
                const Eigen::VectorXd& rhs, Eigen::Index n_eq, double tol, int max_iter)
      : n_(g0.size()),
        normals_(normals),
        rhs_(rhs),
        n_eq_(n_eq),
        tol_(tol),
        max_iter_(max_iter) {
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success) {
      throw Error(ErrorCode::InvalidArgument, "QP Hessian is not positive definite after regularization");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    J_ = L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n_, n_));
    R_ = Eigen::MatrixXd::Zero(n_, n_);
    x_ = -llt.solve(g0);
    r_norm_ = 1.0;
  }

  QpStatus run() {
    // equality constraints first, in index order
    for (Eigen::Index i = 0; i < n_eq_; ++i) {
      const Eigen::VectorXd np = normals_.col(i);
      Eigen::VectorXd d = J_.transpose() * np;
      const Eigen::VectorXd z = step_direction(d);
      const Eigen::VectorXd r = dual_direction(d);
      const double resid = rhs_(i) - np.dot(x_);
      const double zn = z.dot(np);
      if (std::abs(zn) <= kEps * std::max(1.0, z.norm())) {
        // dependent on earlier equalities: consistent or not
        if (std::abs(resid) <= tol_ * std::max(1.0, std::abs(rhs_(i)))) continue;
        return QpStatus::Infeasible;
      }
      const double t = resid / zn;
      x_ += t * z;
      for (Eigen::Index k = 0; k < iq_; ++k) u_[static_cast<std::size_t>(k)] -= t * r(k);
      u_.push_back(t);
      active_.push_back(i);
      if (!add_constraint(d)) {
        u_.pop_back();
        active_.pop_back();
        return QpStatus::Infeasible;
      }
    }
    n_active_eq_ = iq_;

    std::vector<char> excluded(static_cast<std::size_t>(normals_.cols()), 0);
    while (true) {
      // most violated inactive inequality, lowest index on ties
      Eigen::Index p = -1;
      double worst = 0.0;
      for (Eigen::Index i = n_eq_; i < normals_.cols(); ++i) {
        if (is_active(i) || excluded[static_cast<std::size_t>(i)]) continue;
        const double s = normals_.col(i).dot(x_) - rhs_(i);
        const double thresh = -tol_ * std::max(1.0, std::abs(rhs_(i)));
        if (s < thresh && s < worst) {
          worst = s;
          p = i;
        }
      }
      if (p < 0) {
        bool any_excluded = false;
        for (char e : excluded) any_excluded = any_excluded || e;
        if (!any_excluded) return QpStatus::Optimal;
        std::fill(excluded.begin(), excluded.end(), 0);
        // re-scan including previously degenerate rows
        bool violated = false;
        for (Eigen::Index i = n_eq_; i < normals_.cols() && !violated; ++i) {
          if (is_active(i)) continue;
          violated = normals_.col(i).dot(x_) - rhs_(i) < -tol_ * std::max(1.0, std::abs(rhs_(i)));
        }
        if (!violated) return QpStatus::Optimal;
        return QpStatus::Infeasible;
      }

      const Eigen::VectorXd np = normals_.col(p);
      double u_new = 0.0;
      while (true) {
        if (++iterations_ > max_iter_) return QpStatus::IterationLimit;
        Eigen::VectorXd d = J_.transpose() * np;
        const Eigen::VectorXd z = step_direction(d);
        const Eigen::VectorXd r = dual_direction(d);

        // partial (dual) step: first active inequality multiplier to hit zero
        double t1 = kInf;
        Eigen::Index drop = -1;
        for (Eigen::Index k = n_active_eq_; k < iq_; ++k) {
          if (r(k) > 0.0) {
            const double ratio = u_[static_cast<std::size_t>(k)] / r(k);
            if (ratio < t1) {
              t1 = ratio;
              drop = k;
            }
          }
        }
        // full (primal) step
        const double s = np.dot(x_) - rhs_(p);
        const double zn = z.dot(np);
        const double t2 = std::abs(zn) > kEps ? -s / zn : kInf;
        const double t = std::min(t1, t2);

        if (!std::isfinite(t)) return QpStatus::Infeasible;

        if (!std::isfinite(t2)) {
          for (Eigen::Index k = 0; k < iq_; ++k) u_[static_cast<std::size_t>(k)] -= t * r(k);
          u_new += t;
          delete_constraint(drop);
          continue;
        }

        x_ += t * z;
        for (Eigen::Index k = 0; k < iq_; ++k) u_[static_cast<std::size_t>(k)] -= t * r(k);
        u_new += t;

        if (t2 <= t1) {
          u_.push_back(u_new);
          active_.push_back(p);
          if (!add_constraint(d)) {
            // degenerate: undo the bookkeeping and try another row
            u_.pop_back();
            active_.pop_back();
            excluded[static_cast<std::size_t>(p)] = 1;
          }
          break;
        }
        delete_constraint(drop);
      }
    }
  }

  const Eigen::VectorXd& x() const { return x_; }
  int iterations() const { return iterations_; }
  const std::vector<Eigen::Index>& active() const { return active_; }
  const std::vector<double>& multipliers() const { return u_; }

 private:
  static constexpr double kEps = std::numeric_limits<double>::epsilon();
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  bool is_active(Eigen::Index i) const {
    return std::find(active_.begin(), active_.end(), i) != active_.end();
  }

  Eigen::VectorXd step_direction(const Eigen::VectorXd& d) const {
    const Eigen::Index rest = n_ - iq_;
    if (rest == 0) return Eigen::VectorXd::Zero(n_);
    return J_.rightCols(rest) * d.tail(rest);
  }

  Eigen::VectorXd dual_direction(const Eigen::VectorXd& d) const {
    Eigen::VectorXd r(iq_);
    for (Eigen::Index i = iq_ - 1; i >= 0; --i) {
      double sum = d(i);
      for (Eigen::Index j = i + 1; j < iq_; ++j) sum -= R_(i, j) * r(j);
      r(i) = sum / R_(i, i);
    }
    return r;
  }

  // Reflects columns a and b of J so that (d_a, d_b) becomes (h, 0).
  void reflect_columns(Eigen::Index a, Eigen::Index b, Eigen::VectorXd& d) {
    const double h = std::hypot(d(a), d(b));
    if (h == 0.0) return;
    const double cc = d(a) / h;
    const double ss = d(b) / h;
    d(a) = h;
    d(b) = 0.0;
    for (Eigen::Index k = 0; k < n_; ++k) {
      const double ja = J_(k, a);
      const double jb = J_(k, b);
      J_(k, a) = cc * ja + ss * jb;
      J_(k, b) = ss * ja - cc * jb;
    }
  }

  bool add_constraint(Eigen::VectorXd& d) {
    for (Eigen::Index j = n_ - 1; j >= iq_ + 1; --j) reflect_columns(j - 1, j, d);
    for (Eigen::Index i = 0; i <= iq_; ++i) R_(i, iq_) = d(i);
    ++iq_;
    if (std::abs(d(iq_ - 1)) <= kEps * r_norm_) {
      // linearly dependent on the active set; roll back the column
      --iq_;
      for (Eigen::Index i = 0; i <= iq_; ++i) R_(i, iq_) = 0.0;
      return false;
    }
    r_norm_ = std::max(r_norm_, std::abs(d(iq_ - 1)));
    return true;
  }

  void delete_constraint(Eigen::Index pos) {
    active_.erase(active_.begin() + pos);
    u_.erase(u_.begin() + pos);
    for (Eigen::Index j = pos; j + 1 < iq_; ++j) R_.col(j) = R_.col(j + 1);
    R_.col(iq_ - 1).setZero();
    --iq_;
    // restore triangularity of R (upper Hessenberg from column pos on)
    for (Eigen::Index j = pos; j < iq_; ++j) {
      const double a = R_(j, j);
      const double b = R_(j + 1, j);
      const double h = std::hypot(a, b);
      if (h == 0.0) continue;
      const double cc = a / h;
      const double ss = b / h;
      for (Eigen::Index k = j; k < iq_; ++k) {
        const double ra = R_(j, k);
        const double rb = R_(j + 1, k);
        R_(j, k) = cc * ra + ss * rb;
        R_(j + 1, k) = ss * ra - cc * rb;
      }
      R_(j + 1, j) = 0.0;
      for (Eigen::Index k = 0; k < n_; ++k) {
        const double ja = J_(k, j);
        const double jb = J_(k, j + 1);
        J_(k, j) = cc * ja + ss * jb;
        J_(k, j + 1) = ss * ja - cc * jb;
      }
    }
  }

  Eigen::Index n_;
  const Eigen::MatrixXd& normals_;
  const Eigen::VectorXd& rhs_;
  Eigen::Index n_eq_;
  double tol_;
  int max_iter_;

  Eigen::MatrixXd J_;
  Eigen::MatrixXd R_;
  Eigen::VectorXd x_;
  double r_norm_ = 1.0;
  Eigen::Index iq_ = 0;
  Eigen::Index n_active_eq_ = 0;
  int iterations_ = 0;
  std::vector<Eigen::Index> active_;  // constraint ids in factorization order
  std::vector<double> u_;             // multipliers, same order
};

}  // namespace detail

/// Solves a convex QP with the Goldfarb-Idnani dual active-set method.
///
/// When H is singular or nearly so, it is regularized by 1e-12 * trace(H) / dim
/// on the diagonal so that semidefinite moment blocks stay factorizable. Constraint rows are scaled
/// to unit norm internally; returned multipliers refer to the caller's rows.
/// Results are deterministic: the most violated row enters, lowest index
/// first on ties.
inline QpSolution solve_qp(const QpProblem& p, double tol = kQpTol, int max_iter = 0) {
  p.check_dimensions();
  const Eigen::Index n = p.dim();
  const Eigen::Index me = p.A_eq.rows();
  const Eigen::Index mi = p.A_in.rows();
  if (max_iter <= 0) max_iter = static_cast<int>(std::max<Eigen::Index>(50 * n, 50));

  QpSolution sol;
  sol.lambda_eq = Eigen::VectorXd::Zero(me);
  sol.mu_in = Eigen::VectorXd::Zero(mi);
  if (n == 0) {
    sol.theta.resize(0);
    bool ok = true;
    for (Eigen::Index i = 0; i < me; ++i) ok = ok && std::abs(p.b_eq(i)) <= tol * std::max(1.0, std::abs(p.b_eq(i)));
    for (Eigen::Index i = 0; i < mi; ++i) ok = ok && p.b_in(i) >= -tol * std::max(1.0, std::abs(p.b_in(i)));
    sol.status = ok ? QpStatus::Optimal : QpStatus::Infeasible;
    return sol;
  }

  Eigen::MatrixXd G = 2.0 * p.H;
  {
    // regularize only when the Cholesky factor is missing or badly conditioned
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      const Eigen::VectorXd d = Eigen::MatrixXd(llt.matrixL()).diagonal().cwiseAbs();
      ok = d.minCoeff() > 1e-6 * d.maxCoeff();
    }
    if (!ok) {
      const double trace = p.H.trace();
      const double reg = 1e-12 * (trace > 0.0 ? trace / static_cast<double>(n) : 1.0);
      G.diagonal().array() += 2.0 * reg;
    }
  }
  const Eigen::VectorXd g0 = -2.0 * p.q;

  // normals as columns: equalities first, then inequalities flipped to n^T x >= b
  std::vector<Eigen::Index> origin;  // caller row id; equalities as-is, inequalities offset by me
  std::vector<double> scale;
  std::vector<Eigen::VectorXd> cols;
  std::vector<double> rhs;
  Eigen::Index n_eq = 0;
  for (Eigen::Index i = 0; i < me; ++i) {
    const double s = p.A_eq.row(i).norm();
    if (s == 0.0) {
      if (std::abs(p.b_eq(i)) > tol * std::max(1.0, std::abs(p.b_eq(i)))) {
        sol.status = QpStatus::Infeasible;
        sol.theta = Eigen::VectorXd::Zero(n);
        return sol;
      }
      continue;
    }
    cols.emplace_back(p.A_eq.row(i).transpose() / s);
    rhs.push_back(p.b_eq(i) / s);
    origin.push_back(i);
    scale.push_back(s);
    ++n_eq;
  }
  for (Eigen::Index i = 0; i < mi; ++i) {
    const double s = p.A_in.row(i).norm();
    if (s == 0.0) {
      if (p.b_in(i) < -tol * std::max(1.0, std::abs(p.b_in(i)))) {
        sol.status = QpStatus::Infeasible;
        sol.theta = Eigen::VectorXd::Zero(n);
        return sol;
      }
      continue;
    }
    cols.emplace_back(-p.A_in.row(i).transpose() / s);
    rhs.push_back(-p.b_in(i) / s);
    origin.push_back(me + i);
    scale.push_back(s);
  }
  Eigen::MatrixXd normals(n, static_cast<Eigen::Index>(cols.size()));
  Eigen::VectorXd b(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    normals.col(static_cast<Eigen::Index>(k)) = cols[k];
    b(static_cast<Eigen::Index>(k)) = rhs[k];
  }

  detail::DualActiveSet solver(G, g0, normals, b, n_eq, 0.1 * tol, max_iter);
  sol.status = solver.run();
  sol.theta = solver.x();
  sol.iterations = solver.iterations();
  const auto& act = solver.active();
  const auto& u = solver.multipliers();
  for (std::size_t k = 0; k < act.size(); ++k) {
    const auto col = static_cast<std::size_t>(act[k]);
    const Eigen::Index row = origin[col];
    if (row < me) {
      sol.lambda_eq(row) = -u[k] / scale[col];
    } else {
      sol.mu_in(row - me) = u[k] / scale[col];
      sol.active_inequalities.push_back(row - me);
    }
  }
  std::sort(sol.active_inequalities.begin(), sol.active_inequalities.end());
  sol.objective = p.objective(sol.theta);
  return sol;
}

}  // namespace plqkit
