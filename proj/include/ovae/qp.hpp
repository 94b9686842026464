#pragma once

// Strictly convex quadratic programs
//
//     min  1/2 v'Qv + c'v   s.t.  lb <= A v <= ub,  var_lb <= v <= var_ub
//
// solved with the Goldfarb-Idnani dual active-set method (D. Goldfarb,
// A. Idnani, Math. Programming 27, 1983), following the structure of the
// QuadProg++ routine: Cholesky factor of Q, the J = L^-T basis updated by
// Givens rotations, and the upper-triangular R of the active normals.
// Infinite bounds are skipped; rows with lb == ub become equalities.
//
// Linear programs are solved through the same core by adding a small
// eps/2 |v|^2 term (solve_lp_via_regularization).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/error.hpp"

namespace ovae::qp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QuadProgram {
  Matrix Q;       // n x n, symmetric positive definite
  Vector c;       // n
  Matrix A;       // m x n (m may be 0)
  Vector lb, ub;  // m, entries may be +-inf
  Vector var_lb;  // n, entries may be +-inf
  Vector var_ub;  // n

  Eigen::Index num_vars() const { return c.size(); }

  // Fills empty bound vectors with +-inf and zero-row A.
  void normalize_shapes() {
    const auto n = c.size();
    if (A.size() == 0) A.resize(0, n);
    if (lb.size() == 0 && A.rows() > 0) lb = Vector::Constant(A.rows(), -kInf);
    if (ub.size() == 0 && A.rows() > 0) ub = Vector::Constant(A.rows(), kInf);
    if (var_lb.size() == 0) var_lb = Vector::Constant(n, -kInf);
    if (var_ub.size() == 0) var_ub = Vector::Constant(n, kInf);
  }

  void validate() const {
    const auto n = c.size();
    require(n > 0, ErrorKind::Domain, "QuadProgram: no variables");
    require(Q.rows() == n && Q.cols() == n, ErrorKind::Dimension, "QuadProgram: Q must be n x n");
    require(A.cols() == n && lb.size() == A.rows() && ub.size() == A.rows(), ErrorKind::Dimension,
            "QuadProgram: constraint rows/bounds mismatch");
    require(var_lb.size() == n && var_ub.size() == n, ErrorKind::Dimension, "QuadProgram: variable bounds length");
    require((Q - Q.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + Q.cwiseAbs().maxCoeff()),
            ErrorKind::Domain, "QuadProgram: Q must be symmetric");
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      require(lb(i) <= ub(i), ErrorKind::Domain, "QuadProgram: lb > ub in row " + std::to_string(i));
    for (Eigen::Index i = 0; i < n; ++i)
      require(var_lb(i) <= var_ub(i), ErrorKind::Domain, "QuadProgram: var_lb > var_ub for variable " + std::to_string(i));
  }
};

enum class Status { Optimal, Infeasible };

inline const char* to_string(Status s) { return s == Status::Optimal ? "optimal" : "infeasible"; }

struct ActiveConstraint {
  enum class Source { Row, Variable };
  enum class Side { Lower, Upper, Equality };
  Source source;
  Eigen::Index index;
  Side side;
  double multiplier;  // >= 0 for inequalities
};

struct QpSolution {
  Vector primal;
  double objective = kInf;
  std::vector<ActiveConstraint> active_set;
  Status status = Status::Infeasible;
  int iterations = 0;
};

struct SolveOptions {
  double feasibility_tol = 1e-8;  // absolute, checked on Optimal
  double max_condition = 1e14;
  int max_iterations = 0;  // 0 -> 20 * (n + constraints) + 100
};

namespace detail {

// One-sided constraint n'v >= b (or == b), remembering where it came from.
struct Row {
  Vector normal;
  double rhs;
  ActiveConstraint::Source source;
  Eigen::Index index;
  ActiveConstraint::Side side;
};

inline std::vector<Row> expand(const QuadProgram& p, std::vector<Row>& equalities) {
  using S = ActiveConstraint::Source;
  using D = ActiveConstraint::Side;
  const auto n = p.num_vars();
  std::vector<Row> ineq;
  auto add = [&](const Vector& a, double lo, double hi, S src, Eigen::Index idx) {
    if (lo == hi) {
      require(std::isfinite(lo), ErrorKind::Domain, "QuadProgram: infinite equality bound");
      equalities.push_back({a, lo, src, idx, D::Equality});
      return;
    }
    if (std::isfinite(lo)) ineq.push_back({a, lo, src, idx, D::Lower});
    if (std::isfinite(hi)) ineq.push_back({-a, -hi, src, idx, D::Upper});
  };
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) add(p.A.row(i).transpose(), p.lb(i), p.ub(i), S::Row, i);
  for (Eigen::Index i = 0; i < n; ++i) add(Vector::Unit(n, i), p.var_lb(i), p.var_ub(i), S::Variable, i);
  return ineq;
}

inline double hypot_safe(double a, double b) { return std::hypot(a, b); }

// Working state of the dual method.
struct Work {
  Matrix J;  // n x n
  Matrix R;  // n x n, upper triangular in the leading iq block
  Vector d, z, r;
  double r_norm = 1.0;
  int iq = 0;

  void compute_d(const Vector& np) { d.noalias() = J.transpose() * np; }

  void update_z() {
    const auto n = J.rows();
    z = J.rightCols(n - iq) * d.tail(n - iq);
  }

  void update_r() {
    r.setZero();
    for (int i = iq - 1; i >= 0; --i) {
      double sum = 0.0;
      for (int j = i + 1; j < iq; ++j) sum += R(i, j) * r(j);
      r(i) = (d(i) - sum) / R(i, i);
    }
  }

  bool add_constraint() {
    const auto n = J.rows();
    for (Eigen::Index j = n - 1; j >= iq + 1; --j) {
      double cc = d(j - 1), ss = d(j);
      const double h = hypot_safe(cc, ss);
      if (h == 0.0) continue;
      d(j) = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d(j - 1) = -h;
      } else {
        d(j - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j - 1), t2 = J(k, j);
        J(k, j - 1) = t1 * cc + t2 * ss;
        J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
      }
    }
    ++iq;
    for (int i = 0; i < iq; ++i) R(i, iq - 1) = d(i);
    if (std::abs(d(iq - 1)) <= std::numeric_limits<double>::epsilon() * r_norm) return false;
    r_norm = std::max(r_norm, std::abs(d(iq - 1)));
    return true;
  }

  // Removes constraint id `l` (an inequality) from the active list.
  void delete_constraint(std::vector<int>& active, Vector& u, int n_eq, int l) {
    const auto n = J.rows();
    int qq = -1;
    for (int i = n_eq; i < iq; ++i)
      if (active[std::size_t(i)] == l) {
        qq = i;
        break;
      }
    require(qq >= 0, ErrorKind::Numeric, "qp: constraint to drop is not active");
    for (int i = qq; i < iq - 1; ++i) {
      active[std::size_t(i)] = active[std::size_t(i) + 1];
      u(i) = u(i + 1);
      R.col(i) = R.col(i + 1);
    }
    active[std::size_t(iq) - 1] = active[std::size_t(iq)];
    u(iq - 1) = u(iq);
    active[std::size_t(iq)] = 0;
    u(iq) = 0.0;
    for (int j = 0; j < iq; ++j) R(j, iq - 1) = 0.0;
    --iq;
    if (iq == 0) return;
    for (int j = qq; j < iq; ++j) {
      double cc = R(j, j), ss = R(j + 1, j);
      const double h = hypot_safe(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < iq; ++k) {
        const double t1 = R(j, k), t2 = R(j + 1, k);
        R(j, k) = t1 * cc + t2 * ss;
        R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j), t2 = J(k, j + 1);
        J(k, j) = t1 * cc + t2 * ss;
        J(k, j + 1) = xny * (J(k, j) + t1) - t2;
      }
    }
  }
};

}  // namespace detail

inline QpSolution solve_qp(QuadProgram p, const SolveOptions& opt = {}) {
  p.normalize_shapes();
  p.validate();
  const auto n = p.num_vars();

  std::vector<detail::Row> eq;
  const std::vector<detail::Row> ineq = detail::expand(p, eq);
  const int n_eq = int(eq.size());
  const int n_in = int(ineq.size());
  const int n_all = n_eq + n_in;

  Eigen::LLT<Matrix> llt(p.Q);
  require(llt.info() == Eigen::Success, ErrorKind::Numeric, "qp: Q is not positive definite");
  const Matrix L = llt.matrixL();
  const Vector diag = L.diagonal();
  const double cond_est = std::pow(diag.maxCoeff() / diag.minCoeff(), 2);
  require(std::isfinite(cond_est) && cond_est <= opt.max_condition, ErrorKind::Numeric,
          "qp: Q is ill-conditioned (condition estimate " + std::to_string(cond_est) + ")");

  detail::Work w;
  w.J = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n)).transpose();
  w.R = Matrix::Zero(n, n);
  w.d = Vector::Zero(n);
  w.z = Vector::Zero(n);
  w.r = Vector::Zero(std::max(n_all, 1));

  Vector x = llt.solve(-p.c);
  Vector u = Vector::Zero(std::max(n_all, 1) + 1);
  std::vector<int> active(std::size_t(n_all) + 1, 0);

  QpSolution sol;
  auto finish = [&](Status status) {
    sol.status = status;
    sol.primal = x;
    sol.objective = 0.5 * x.dot(p.Q * x) + p.c.dot(x);
    for (int i = 0; i < w.iq; ++i) {
      const int id = active[std::size_t(i)];
      const detail::Row& row = id < 0 ? eq[std::size_t(-id - 1)] : ineq[std::size_t(id)];
      sol.active_set.push_back({row.source, row.index, row.side, u(i)});
    }
    if (status == Status::Optimal) {
      double worst = 0.0;
      for (const auto& row : eq) worst = std::max(worst, std::abs(row.normal.dot(x) - row.rhs));
      for (const auto& row : ineq) worst = std::max(worst, row.rhs - row.normal.dot(x));
      require(worst <= opt.feasibility_tol, ErrorKind::Numeric,
              "qp: optimal point violates constraints by " + std::to_string(worst));
    }
    return sol;
  };

  // Equalities are added unconditionally.
  for (int i = 0; i < n_eq; ++i) {
    const Vector& np = eq[std::size_t(i)].normal;
    w.compute_d(np);
    w.update_z();
    w.update_r();
    double t2 = 0.0;
    if (w.z.squaredNorm() > std::numeric_limits<double>::epsilon())
      t2 = (eq[std::size_t(i)].rhs - np.dot(x)) / w.z.dot(np);
    x += t2 * w.z;
    u(w.iq) = t2;
    for (int k = 0; k < w.iq; ++k) u(k) -= t2 * w.r(k);
    active[std::size_t(w.iq)] = -i - 1;
    require(w.add_constraint(), ErrorKind::Numeric, "qp: equality constraints are linearly dependent");
  }

  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : 20 * (int(n) + n_all) + 100;
  std::vector<bool> inactive(std::size_t(n_in), true);
  std::vector<bool> eligible(std::size_t(n_in), true);
  Vector s = Vector::Zero(std::max(n_in, 1));
  Vector u_old = u, x_old = x;
  std::vector<int> active_old = active;

  auto slack = [&](int i) { return ineq[std::size_t(i)].normal.dot(x) - ineq[std::size_t(i)].rhs; };
  std::vector<double> normal_norm(static_cast<std::size_t>(n_in));
  for (int i = 0; i < n_in; ++i) normal_norm[std::size_t(i)] = ineq[std::size_t(i)].normal.norm();
  auto violation_tol = [&](int i, double x_norm) {
    return 1e-13 * (1.0 + std::abs(ineq[std::size_t(i)].rhs) + normal_norm[std::size_t(i)] * x_norm);
  };

  for (;;) {  // step 1
    require(++sol.iterations <= max_iter, ErrorKind::Numeric, "qp: iteration limit reached");
    for (int i = n_eq; i < w.iq; ++i) inactive[std::size_t(active[std::size_t(i)])] = false;
    for (int i = 0; i < n_in; ++i) {
      eligible[std::size_t(i)] = true;
      s(i) = slack(i);
    }
    u_old = u;
    active_old = active;
    x_old = x;

    bool restart = false;
    while (!restart) {  // step 2: pick the most violated constraint
      int ip = -1;
      double worst = 0.0;
      const double x_norm = x.norm();
      for (int i = 0; i < n_in; ++i)
        if (inactive[std::size_t(i)] && eligible[std::size_t(i)] && s(i) < worst && s(i) < -violation_tol(i, x_norm)) {
          worst = s(i);
          ip = i;
        }
      if (ip < 0) return finish(Status::Optimal);

      const Vector& np = ineq[std::size_t(ip)].normal;
      u(w.iq) = 0.0;
      active[std::size_t(w.iq)] = ip;

      for (;;) {  // step 2a
        require(++sol.iterations <= max_iter, ErrorKind::Numeric, "qp: iteration limit reached");
        w.compute_d(np);
        w.update_z();
        w.update_r();

        double t1 = kInf;
        int l = -1;
        for (int k = n_eq; k < w.iq; ++k)
          if (w.r(k) > 0.0 && u(k) / w.r(k) < t1) {
            t1 = u(k) / w.r(k);
            l = active[std::size_t(k)];
          }
        const double zn = w.z.dot(np);
        const double t2 = w.z.squaredNorm() > std::numeric_limits<double>::epsilon() ? -s(ip) / zn : kInf;
        const double t = std::min(t1, t2);

        if (t >= kInf) return finish(Status::Infeasible);

        if (t2 >= kInf) {  // dual step only
          for (int k = 0; k < w.iq; ++k) u(k) -= t * w.r(k);
          u(w.iq) += t;
          inactive[std::size_t(l)] = true;
          w.delete_constraint(active, u, n_eq, l);
          continue;
        }

        x += t * w.z;
        for (int k = 0; k < w.iq; ++k) u(k) -= t * w.r(k);
        u(w.iq) += t;

        if (t == t2) {  // full step: ip becomes active
          if (!w.add_constraint()) {
            eligible[std::size_t(ip)] = false;
            w.delete_constraint(active, u, n_eq, ip);
            std::fill(inactive.begin(), inactive.end(), true);
            active = active_old;
            u = u_old;
            x = x_old;
            for (int i = n_eq; i < w.iq; ++i) inactive[std::size_t(active[std::size_t(i)])] = false;
            break;  // back to step 2
          }
          inactive[std::size_t(ip)] = false;
          restart = true;
          break;
        }

        // partial step: drop the blocking constraint and retry ip
        inactive[std::size_t(l)] = true;
        w.delete_constraint(active, u, n_eq, l);
        s(ip) = slack(ip);
      }
    }
  }
}

// Re-solves the optimality conditions on the face given by `sol.active_set`
// for a possibly only semidefinite objective `target`, moving as little as
// possible from sol.primal. Returns nothing when the corrected point is not
// primal and dual feasible within tol.
inline std::optional<QpSolution> refine_on_face(QuadProgram target, const QpSolution& sol, double tol) {
  target.normalize_shapes();
  const auto n = target.num_vars();
  const auto m = Eigen::Index(sol.active_set.size());
  Matrix N(m, n);
  Vector b(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& a = sol.active_set[std::size_t(k)];
    const bool row = a.source == ActiveConstraint::Source::Row;
    N.row(k) = row ? Vector(target.A.row(a.index).transpose()) : Vector(Vector::Unit(n, a.index));
    b(k) = a.side == ActiveConstraint::Side::Upper ? (row ? target.ub(a.index) : target.var_ub(a.index))
                                                   : (row ? target.lb(a.index) : target.var_lb(a.index));
  }
  const Vector& x0 = sol.primal;
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = target.Q;
  K.topRightCorner(n, m) = -N.transpose();
  K.bottomLeftCorner(m, n) = N;
  Vector rhs(n + m);
  rhs.head(n) = -(target.Q * x0 + target.c);
  rhs.tail(m) = b - N * x0;
  const Vector step = Eigen::CompleteOrthogonalDecomposition<Matrix>(K).solve(rhs);
  if (((K * step - rhs).cwiseAbs().array() > tol).any()) return std::nullopt;

  QpSolution out = sol;
  out.primal = x0 + step.head(n);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double mult = step(n + k);
    auto& a = out.active_set[std::size_t(k)];
    // Stationarity uses inward normals; upper-bound rows enter with a minus sign.
    a.multiplier = a.side == ActiveConstraint::Side::Upper ? -mult : mult;
    if (a.side != ActiveConstraint::Side::Equality && a.multiplier < -tol) return std::nullopt;
  }
  const Vector ax = target.A * out.primal;
  for (Eigen::Index i = 0; i < target.A.rows(); ++i)
    if (ax(i) < target.lb(i) - tol || ax(i) > target.ub(i) + tol) return std::nullopt;
  for (Eigen::Index i = 0; i < n; ++i)
    if (out.primal(i) < target.var_lb(i) - tol || out.primal(i) > target.var_ub(i) + tol) return std::nullopt;
  out.objective = 0.5 * out.primal.dot(target.Q * out.primal) + target.c.dot(out.primal);
  return out;
}

// ---------------------------------------------------------------------------
// KKT diagnostics. Stationarity is Qv + c - sum(mult * normal) over the
// active set; inequality normals point into the feasible side.

struct KktResidual {
  double stationarity = 0.0;
  double primal_infeasibility = 0.0;
  double dual_infeasibility = 0.0;
  double complementarity = 0.0;

  double max() const {
    return std::max({stationarity, primal_infeasibility, dual_infeasibility, complementarity});
  }
};

inline KktResidual kkt_residual(QuadProgram p, const QpSolution& sol) {
  p.normalize_shapes();
  const auto n = p.num_vars();
  const Vector& x = sol.primal;
  Vector grad = p.Q * x + p.c;
  KktResidual res;
  for (const auto& a : sol.active_set) {
    Vector normal = a.source == ActiveConstraint::Source::Row ? Vector(p.A.row(a.index).transpose())
                                                             : Vector(Vector::Unit(n, a.index));
    double value = normal.dot(x);
    double bound = 0.0;
    switch (a.side) {
      case ActiveConstraint::Side::Lower:
      case ActiveConstraint::Side::Equality:
        bound = a.source == ActiveConstraint::Source::Row ? p.lb(a.index) : p.var_lb(a.index);
        break;
      case ActiveConstraint::Side::Upper:
        bound = a.source == ActiveConstraint::Source::Row ? p.ub(a.index) : p.var_ub(a.index);
        normal = -normal;
        value = -value;
        bound = -bound;
        break;
    }
    grad -= a.multiplier * normal;
    if (a.side != ActiveConstraint::Side::Equality) {
      res.dual_infeasibility = std::max(res.dual_infeasibility, -a.multiplier);
      res.complementarity = std::max(res.complementarity, std::abs(a.multiplier * (value - bound)));
    }
  }
  res.stationarity = grad.cwiseAbs().maxCoeff();
  const Vector ax = p.A * x;
  for (Eigen::Index i = 0; i < p.A.rows(); ++i)
    res.primal_infeasibility = std::max({res.primal_infeasibility, p.lb(i) - ax(i), ax(i) - p.ub(i)});
  for (Eigen::Index i = 0; i < n; ++i)
    res.primal_infeasibility = std::max({res.primal_infeasibility, p.var_lb(i) - x(i), x(i) - p.var_ub(i)});
  return res;
}

inline nlohmann::json to_json(const KktResidual& r) {
  return {{"stationarity", r.stationarity},
          {"primal_infeasibility", r.primal_infeasibility},
          {"dual_infeasibility", r.dual_infeasibility},
          {"complementarity", r.complementarity}};
}

// ---------------------------------------------------------------------------
// Linear programs: min c'v over the same constraint structure.

struct LinearProgram {
  Vector c;
  Matrix A;
  Vector lb, ub;
  Vector var_lb, var_ub;
};

struct LpSolution {
  Vector primal;
  double objective = kInf;
  Status status = Status::Infeasible;
  double regularization = 0.0;
  double objective_shift = 0.0;  // |obj(eps) - obj(eps/10)|
};

namespace detail {

inline QuadProgram regularized(const LinearProgram& lp, double eps) {
  const auto n = lp.c.size();
  QuadProgram p{eps * Matrix::Identity(n, n), lp.c, lp.A, lp.lb, lp.ub, lp.var_lb, lp.var_ub};
  p.normalize_shapes();
  return p;
}

// Minimum-norm point satisfying the active constraints with equality; used
// to strip the O(eps) bias of the regularized solution. Falls back to the
// regularized point if the result is not feasible.
inline Vector polish(const QuadProgram& p, const QpSolution& sol, double tol) {
  const auto n = p.num_vars();
  if (sol.active_set.empty()) return sol.primal;
  Matrix N(Eigen::Index(sol.active_set.size()), n);
  Vector b(N.rows());
  for (Eigen::Index k = 0; k < N.rows(); ++k) {
    const auto& a = sol.active_set[std::size_t(k)];
    const bool row = a.source == ActiveConstraint::Source::Row;
    N.row(k) = row ? Vector(p.A.row(a.index).transpose()) : Vector(Vector::Unit(n, a.index));
    b(k) = a.side == ActiveConstraint::Side::Upper ? (row ? p.ub(a.index) : p.var_ub(a.index))
                                                   : (row ? p.lb(a.index) : p.var_lb(a.index));
  }
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(N);
  // Keep the component of the regularized point orthogonal to the active
  // normals' row space only when the face is not a vertex.
  Vector v = cod.solve(b);
  if (cod.rank() < n) {
    const Matrix basis = Eigen::FullPivLU<Matrix>(N).kernel();
    const Vector diff = sol.primal - v;
    v += basis * (basis.transpose() * basis).ldlt().solve(basis.transpose() * diff);
  }
  const Vector ax = p.A * v;
  for (Eigen::Index i = 0; i < p.A.rows(); ++i)
    if (ax(i) < p.lb(i) - tol || ax(i) > p.ub(i) + tol) return sol.primal;
  for (Eigen::Index i = 0; i < n; ++i)
    if (v(i) < p.var_lb(i) - tol || v(i) > p.var_ub(i) + tol) return sol.primal;
  if (p.c.dot(v) > p.c.dot(sol.primal) + tol * (1.0 + std::abs(p.c.dot(sol.primal)))) return sol.primal;
  return v;
}

}  // namespace detail

inline LpSolution solve_lp_via_regularization(const LinearProgram& lp, double eps_reg = 1e-8) {
  require(eps_reg > 0.0, ErrorKind::Domain, "lp: regularization must be positive");
  const QuadProgram p1 = detail::regularized(lp, eps_reg);
  const QuadProgram p2 = detail::regularized(lp, eps_reg / 10.0);
  // The dual method starts from -c/eps, so rounding in the raw solves scales
  // with that point; the face refinement and polish restore full accuracy.
  auto raw_solve = [](const QuadProgram& p, double eps) {
    SolveOptions opt;
    opt.feasibility_tol = 1e-14 * (1.0 + p.c.norm() / eps);
    QpSolution s = solve_qp(p, opt);
    if (s.status == Status::Optimal)
      if (auto r = refine_on_face(p, s, 1e-10)) s = std::move(*r);
    return s;
  };
  const QpSolution s1 = raw_solve(p1, eps_reg);
  LpSolution out;
  out.regularization = eps_reg;
  if (s1.status == Status::Infeasible) return out;
  const QpSolution s2 = raw_solve(p2, eps_reg / 10.0);
  require(s2.status == Status::Optimal, ErrorKind::Numeric, "lp: regularized re-solve disagrees on feasibility");
  require(s2.primal.norm() <= 5.0 * (s1.primal.norm() + 1.0), ErrorKind::Numeric,
          "lp: solution norm grows as the regularization shrinks; the LP appears unbounded");
  const Vector v1 = detail::polish(p1, s1, 1e-9);
  const Vector v2 = detail::polish(p2, s2, 1e-9);
  const double o1 = lp.c.dot(v1), o2 = lp.c.dot(v2);
  out.objective_shift = std::abs(o1 - o2);
  require(out.objective_shift < 1e-6 * std::max(1.0, std::abs(o1)), ErrorKind::Numeric,
          "lp: optimum is sensitive to the regularization (shift " + std::to_string(out.objective_shift) + ")");
  double worst = 0.0;
  const Vector av = p1.A * v1;
  for (Eigen::Index i = 0; i < av.size(); ++i) worst = std::max({worst, p1.lb(i) - av(i), av(i) - p1.ub(i)});
  for (Eigen::Index i = 0; i < v1.size(); ++i) worst = std::max({worst, p1.var_lb(i) - v1(i), v1(i) - p1.var_ub(i)});
  require(worst <= 1e-8, ErrorKind::Numeric, "lp: solution violates constraints by " + std::to_string(worst));
  out.primal = v1;
  out.objective = o1;
  out.status = Status::Optimal;
  return out;
}

}  // namespace ovae::qp
