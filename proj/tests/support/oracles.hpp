#pragma once

// Reference implementations used only by tests. Each is deliberately simple
// and shares no code with the library routine it checks.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/qp.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Pearson chi-square goodness of fit of values in [0,1] against the uniform
// law on `bins` equal bins; returns the upper-tail p-value.
inline double chi2_uniform_p(const std::vector<double>& u, int bins = 10) {
  std::vector<double> counts(std::size_t(bins), 0.0);
  for (double v : u) counts[std::size_t(std::clamp(int(v * bins), 0, bins - 1))] += 1.0;
  const double expected = double(u.size()) / bins;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  return boost::math::gamma_q(0.5 * (bins - 1), 0.5 * stat);
}

// Central finite-difference gradient of f at x.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, Vector x, double h = 1e-4) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    x(i) = xi + h;
    const double fp = f(x);
    x(i) = xi - h;
    const double fm = f(x);
    x(i) = xi;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max({1.0, std::abs(a(i)), std::abs(b(i))}));
  return worst;
}

// Inequality form G x <= h of a QuadProgram (two-sided rows and bounds split).
struct Inequalities {
  Matrix G;
  Vector h;
};

inline Inequalities inequalities(const ovae::qp::QuadProgram& p) {
  std::vector<Vector> rows;
  std::vector<double> rhs;
  const auto n = p.c.size();
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) {
    if (std::isfinite(p.ub(i))) {
      rows.push_back(p.A.row(i).transpose());
      rhs.push_back(p.ub(i));
    }
    if (std::isfinite(p.lb(i))) {
      rows.push_back(-p.A.row(i).transpose());
      rhs.push_back(-p.lb(i));
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    Vector e = Vector::Zero(n);
    e(j) = 1.0;
    if (std::isfinite(p.var_ub(j))) {
      rows.push_back(e);
      rhs.push_back(p.var_ub(j));
    }
    if (std::isfinite(p.var_lb(j))) {
      rows.push_back(-e);
      rhs.push_back(-p.var_lb(j));
    }
  }
  Inequalities out{Matrix(Eigen::Index(rows.size()), n), Vector(Eigen::Index(rows.size()))};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.G.row(Eigen::Index(k)) = rows[k].transpose();
    out.h(Eigen::Index(k)) = rhs[k];
  }
  return out;
}

struct DualResult {
  double dual_value;   // lower bound on the optimum
  Vector x;            // primal recovered from the multipliers
};

// Projected-gradient (FISTA with restarts) ascent on the dual of
// min 1/2 x'Qx + c'x s.t. Gx <= h, over multipliers lambda >= 0.
inline DualResult dual_projected_gradient(const ovae::qp::QuadProgram& p, int iterations = 200000) {
  const auto [G, h] = inequalities(p);
  const Eigen::LLT<Matrix> llt(p.Q);
  const Matrix QiGt = llt.solve(G.transpose());
  const Matrix H = G * QiGt;
  const Vector Qic = llt.solve(p.c);
  if (G.rows() == 0) {
    const Vector x = -Qic;
    return {0.5 * x.dot(p.Q * x) + p.c.dot(x), x};
  }
  const double L = std::max(1e-12, H.operatorNorm());
  auto primal = [&](const Vector& lam) -> Vector { return -Qic - QiGt * lam; };
  auto dual = [&](const Vector& lam) {
    const Vector x = primal(lam);
    return 0.5 * x.dot(p.Q * x) + p.c.dot(x) + lam.dot(G * x - h);
  };
  Vector lam = Vector::Zero(G.rows()), y = lam;
  double t = 1.0, best = dual(lam);
  for (int it = 0; it < iterations; ++it) {
    const Vector grad = G * primal(y) - h;
    const Vector next = (y + grad / L).cwiseMax(0.0);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double val = dual(next);
    if (val < best) {  // restart momentum
      y = lam;
      t = 1.0;
      continue;
    }
    y = next + ((t - 1.0) / t_next) * (next - lam);
    lam = next;
    t = t_next;
    best = val;
  }
  return {best, primal(lam)};
}

// Coordinate grid refinement for box-constrained problems with <= 3
// variables: evaluate a grid, recentre on the best point, shrink, repeat.
inline double grid_minimum(const std::function<double(const Vector&)>& f, const Vector& lo, const Vector& hi,
                           int points = 21, int rounds = 40) {
  const auto n = lo.size();
  Vector a = lo, b = hi, best_x = 0.5 * (lo + hi);
  double best = f(best_x);
  std::vector<int> idx(std::size_t(n), 0);
  for (int r = 0; r < rounds; ++r) {
    std::fill(idx.begin(), idx.end(), 0);
    while (true) {
      Vector x(n);
      for (Eigen::Index i = 0; i < n; ++i) x(i) = a(i) + (b(i) - a(i)) * idx[std::size_t(i)] / double(points - 1);
      const double v = f(x);
      if (v < best) {
        best = v;
        best_x = x;
      }
      Eigen::Index k = 0;
      while (k < n && ++idx[std::size_t(k)] == points) idx[std::size_t(k++)] = 0;
      if (k == n) break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double half = 0.25 * (b(i) - a(i));
      a(i) = std::max(lo(i), best_x(i) - half);
      b(i) = std::min(hi(i), best_x(i) + half);
    }
  }
  return best;
}

// Vertex enumeration for a 2-variable LP min c'x s.t. Gx <= h (bounded).
inline double lp2_vertex_minimum(const Vector& c, const Matrix& G, const Vector& h) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < G.rows(); ++i)
    for (Eigen::Index j = i + 1; j < G.rows(); ++j) {
      Eigen::Matrix2d M;
      M << G(i, 0), G(i, 1), G(j, 0), G(j, 1);
      if (std::abs(M.determinant()) < 1e-12) continue;
      const Eigen::Vector2d x = M.inverse() * Eigen::Vector2d(h(i), h(j));
      if (((G * Vector(x)) - h).maxCoeff() <= 1e-9) best = std::min(best, c.dot(Vector(x)));
    }
  return best;
}

// ---------------------------------------------------------------------------
// Transport oracle for the adequacy model: with zero flow admissible on every
// line, the least total curtailment equals total demand minus the maximum
// source-to-sink flow through generation (source -> area, capacity g),
// lines (both directions), and demand (area -> sink, capacity d).

class MaxFlow {
 public:
  explicit MaxFlow(int n) : cap_(std::size_t(n), std::vector<double>(std::size_t(n), 0.0)) {}
  void add(int u, int v, double c) { cap_[std::size_t(u)][std::size_t(v)] += c; }

  double run(int s, int t) {
    const auto n = cap_.size();
    double total = 0.0;
    while (true) {
      std::vector<int> prev(n, -1);
      prev[std::size_t(s)] = s;
      std::deque<int> q{s};
      while (!q.empty() && prev[std::size_t(t)] < 0) {
        const int u = q.front();
        q.pop_front();
        for (std::size_t v = 0; v < n; ++v)
          if (prev[v] < 0 && cap_[std::size_t(u)][v] > 1e-12) {
            prev[v] = u;
            q.push_back(int(v));
          }
      }
      if (prev[std::size_t(t)] < 0) return total;
      double push = std::numeric_limits<double>::infinity();
      for (int v = t; v != s; v = prev[std::size_t(v)])
        push = std::min(push, cap_[std::size_t(prev[std::size_t(v)])][std::size_t(v)]);
      for (int v = t; v != s; v = prev[std::size_t(v)]) {
        cap_[std::size_t(prev[std::size_t(v)])][std::size_t(v)] -= push;
        cap_[std::size_t(v)][std::size_t(prev[std::size_t(v)])] += push;
      }
      total += push;
    }
  }

 private:
  std::vector<std::vector<double>> cap_;
};

inline double min_curtailment(const ovae::adequacy::NetworkModel& net, const Vector& g, const Vector& d) {
  const int na = int(net.size());
  const int s = na, t = na + 1;
  MaxFlow mf(na + 2);
  for (int i = 0; i < na; ++i) {
    mf.add(s, i, g(i));
    mf.add(i, t, d(i));
  }
  for (const auto& l : net.lines) {
    mf.add(int(l.from), int(l.to), std::max(0.0, l.f_max));
    mf.add(int(l.to), int(l.from), std::max(0.0, -l.f_min));
  }
  return d.sum() - mf.run(s, t);
}

// Largest k with zero curtailment at demand (1 + k) d, by bisection on the
// transport oracle; returns k * sum(d).
inline double margin_by_bisection(const ovae::adequacy::NetworkModel& net, const Vector& g, const Vector& d) {
  auto ok = [&](double k) { return min_curtailment(net, g, (1.0 + k) * d) <= 1e-9 * (1.0 + d.sum()); };
  double lo = 0.0, hi = 1.0;
  while (ok(hi)) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? lo : hi) = mid;
  }
  return lo * d.sum();
}

}  // namespace oracle
