#pragma once

// Multi-area resource adequacy: network description, generation sampling,
// curtailment dispatch (QP), distance-from-shortfall margin (LP), impact
// functions and feature labels.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ovae/error.hpp"
#include "ovae/qp.hpp"
#include "ovae/rng.hpp"

namespace ovae::adequacy {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kHoursPerYear = 8760.0;
inline constexpr double kEpnsZeroThreshold = 1e-9;  // MW
inline constexpr double kWindCredit = 0.15;
inline constexpr double kMaxUnitSize = 500.0;  // MW

struct Area {
  std::string name;
  double conventional_capacity = 0.0;  // MW
  double wind_nameplate = 0.0;         // MW
  double unit_size = 0.0;              // MW
  int unit_count = 0;
  double availability = 0.8;
};

// Flow f is positive from `from` to `to`; from < to.
struct Line {
  std::size_t from = 0;
  std::size_t to = 0;
  double f_min = 0.0;  // MW
  double f_max = 0.0;  // MW
};

struct NetworkModel {
  std::vector<Area> areas;
  std::vector<Line> lines;

  std::size_t size() const { return areas.size(); }

  void validate() const {
    require(!areas.empty(), ErrorKind::Config, "network: no areas");
    for (const auto& a : areas) {
      require(a.conventional_capacity >= 0 && a.wind_nameplate >= 0 && a.unit_count >= 0 && a.unit_size >= 0,
              ErrorKind::Config, "network: area '" + a.name + "' has negative capacity data");
      require(std::abs(a.unit_size * a.unit_count - a.conventional_capacity) <= 1e-6 * (1.0 + a.conventional_capacity),
              ErrorKind::Config, "network: area '" + a.name + "': unit_size * unit_count != conventional_capacity");
      require(a.availability > 0.0 && a.availability <= 1.0, ErrorKind::Config,
              "network: area '" + a.name + "': availability must lie in (0,1]");
    }
    for (const auto& l : lines) {
      require(l.from < l.to && l.to < areas.size(), ErrorKind::Config, "network: line endpoints invalid (need from < to)");
      require(std::isfinite(l.f_min) && std::isfinite(l.f_max), ErrorKind::Config, "network: line limits must be finite");
      require(l.f_min <= l.f_max, ErrorKind::Config, "network: line with f_min > f_max");
    }
  }
};

struct UnitSizing {
  double unit_size;
  int unit_count;
};

// Largest integer divisor of the capacity not above 500 MW (1 MW if none).
inline UnitSizing unit_size_rule(long long total_capacity) {
  require(total_capacity > 0, ErrorKind::Domain, "unit_size_rule: capacity must be a positive integer MW value");
  for (long long s = std::min<long long>(total_capacity, (long long)kMaxUnitSize); s >= 1; --s)
    if (total_capacity % s == 0) return {double(s), int(total_capacity / s)};
  return {1.0, int(total_capacity)};
}

// Area with units sized by unit_size_rule; capacity is rounded to whole MW.
inline Area make_area(std::string name, double conventional_capacity, double wind_nameplate,
                      double availability = 0.8) {
  Area a;
  a.name = std::move(name);
  a.wind_nameplate = wind_nameplate;
  a.availability = availability;
  const auto cap = (long long)std::llround(conventional_capacity);
  if (cap > 0) {
    const auto sizing = unit_size_rule(cap);
    a.unit_size = sizing.unit_size;
    a.unit_count = sizing.unit_count;
  }
  a.conventional_capacity = a.unit_size * a.unit_count;
  return a;
}

inline Vector sample_generation(const NetworkModel& net, Rng& rng) {
  Vector g(Eigen::Index(net.size()));
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& a = net.areas[i];
    double units = double(a.unit_count);
    if (a.availability < 1.0 && a.unit_count > 0) {
      std::binomial_distribution<int> up(a.unit_count, a.availability);
      units = double(up(rng));
    }
    g(Eigen::Index(i)) = units * a.unit_size + kWindCredit * a.wind_nameplate;
  }
  return g;
}

struct SystemState {
  Vector available_gen;  // MW
  Vector demand;         // MW
};

struct DispatchResult {
  Vector curtailment;  // MW per area
  Vector flows;        // MW per line
  double epns = 0.0;   // MW
};

namespace detail {

inline void check_state(const NetworkModel& net, const SystemState& s) {
  require(s.available_gen.size() == Eigen::Index(net.size()) && s.demand.size() == Eigen::Index(net.size()),
          ErrorKind::Dimension, "state vectors must have one entry per area");
  require((s.available_gen.array() >= 0).all() && (s.demand.array() >= 0).all() && s.demand.allFinite() &&
              s.available_gen.allFinite(),
          ErrorKind::Domain, "state entries must be finite and nonnegative");
}

// Net-import operator: (N f)_i = sum of flows into i minus flows out of i.
inline Matrix incidence(const NetworkModel& net) {
  Matrix n = Matrix::Zero(Eigen::Index(net.size()), Eigen::Index(net.lines.size()));
  for (std::size_t l = 0; l < net.lines.size(); ++l) {
    n(Eigen::Index(net.lines[l].to), Eigen::Index(l)) += 1.0;
    n(Eigen::Index(net.lines[l].from), Eigen::Index(l)) -= 1.0;
  }
  return n;
}

inline double per_unit_base(const NetworkModel& net, const SystemState& s) {
  double base = std::max({1.0, s.demand.maxCoeff(), s.available_gen.maxCoeff()});
  for (const auto& l : net.lines) base = std::max({base, std::abs(l.f_min), std::abs(l.f_max)});
  return base;
}

// Flow regularization that makes the curtailment QP strictly convex in the
// flows. Its bias is removed afterwards by refine_on_face.
inline constexpr double kFlowRegularization = 1e-7;
inline constexpr double kRefineTol = 1e-9;  // pu

// Line flows that cover every local deficit g_i < d_i from surplus areas
// without curtailment, if any exist (Edmonds-Karp max-flow, MW). Requires
// f_min <= 0 <= f_max on every line.
inline std::optional<Vector> uncurtailed_flows(const NetworkModel& net, const Vector& g, const Vector& d) {
  struct Arc {
    int to;
    double cap;
  };
  const int na = int(net.size());
  const int src = na, sink = na + 1;
  std::vector<Arc> arcs;
  std::vector<std::vector<int>> adj(std::size_t(na + 2));
  auto add = [&](int u, int v, double cu, double cv) {
    adj[std::size_t(u)].push_back(int(arcs.size()));
    arcs.push_back({v, cu});
    adj[std::size_t(v)].push_back(int(arcs.size()));
    arcs.push_back({u, cv});
  };
  for (const auto& l : net.lines) add(int(l.from), int(l.to), l.f_max, -l.f_min);
  double deficit = 0.0;
  for (int i = 0; i < na; ++i) {
    const double s = g(i) - d(i);
    if (s > 0.0) add(src, i, s, 0.0);
    if (s < 0.0) {
      add(i, sink, -s, 0.0);
      deficit -= s;
    }
  }
  double delivered = 0.0;
  std::vector<int> via(std::size_t(na + 2));
  while (delivered < deficit - kEpnsZeroThreshold) {
    std::fill(via.begin(), via.end(), -1);
    std::vector<int> queue{src};
    via[std::size_t(src)] = -2;
    for (std::size_t q = 0; q < queue.size() && via[std::size_t(sink)] == -1; ++q)
      for (int a : adj[std::size_t(queue[q])])
        if (arcs[std::size_t(a)].cap > 0.0 && via[std::size_t(arcs[std::size_t(a)].to)] == -1) {
          via[std::size_t(arcs[std::size_t(a)].to)] = a;
          queue.push_back(arcs[std::size_t(a)].to);
        }
    if (via[std::size_t(sink)] == -1) return std::nullopt;
    double push = qp::kInf;
    for (int v = sink; v != src; v = arcs[std::size_t(via[std::size_t(v)] ^ 1)].to)
      push = std::min(push, arcs[std::size_t(via[std::size_t(v)])].cap);
    for (int v = sink; v != src; v = arcs[std::size_t(via[std::size_t(v)] ^ 1)].to) {
      arcs[std::size_t(via[std::size_t(v)])].cap -= push;
      arcs[std::size_t(via[std::size_t(v)] ^ 1)].cap += push;
    }
    delivered += push;
  }
  Vector flows(Eigen::Index(net.lines.size()));
  for (std::size_t l = 0; l < net.lines.size(); ++l) flows(Eigen::Index(l)) = net.lines[l].f_max - arcs[2 * l].cap;
  return flows;
}

}  // namespace detail

// Curtailment dispatch: min sum c_i^2/(2 d_i) + c_i over flows and
// curtailments subject to line limits, 0 <= c <= d and the nodal balance
// band d - g <= imports + c <= d. Areas with zero demand keep c_i = 0.
inline DispatchResult dispatch(const NetworkModel& net, const SystemState& state) {
  detail::check_state(net, state);
  const auto na = Eigen::Index(net.size());
  const auto nl = Eigen::Index(net.lines.size());
  DispatchResult out;
  out.curtailment = Vector::Zero(na);
  out.flows = Vector::Zero(nl);

  bool zero_flow_ok = true;
  for (const auto& l : net.lines) zero_flow_ok = zero_flow_ok && l.f_min <= 0.0 && l.f_max >= 0.0;
  if (zero_flow_ok && (state.available_gen.array() >= state.demand.array()).all()) return out;
  if (zero_flow_ok && state.available_gen.sum() >= state.demand.sum())
    if (auto flows = detail::uncurtailed_flows(net, state.available_gen, state.demand)) {
      out.flows = std::move(*flows);
      return out;
    }

  const double base = detail::per_unit_base(net, state);
  const Vector d = state.demand / base;
  const Vector g = state.available_gen / base;

  std::vector<Eigen::Index> curt;  // areas with a curtailment variable
  for (Eigen::Index i = 0; i < na; ++i)
    if (d(i) > 0.0) curt.push_back(i);
  const auto nc = Eigen::Index(curt.size());
  const auto n = nc + nl;

  qp::QuadProgram p;
  p.Q = Matrix::Zero(n, n);
  p.c = Vector::Zero(n);
  p.var_lb.resize(n);
  p.var_ub.resize(n);
  for (Eigen::Index k = 0; k < nc; ++k) {
    p.Q(k, k) = 1.0 / d(curt[std::size_t(k)]);
    p.c(k) = 1.0;
    p.var_lb(k) = 0.0;
    p.var_ub(k) = d(curt[std::size_t(k)]);
  }
  for (Eigen::Index l = 0; l < nl; ++l) {
    p.Q(nc + l, nc + l) = detail::kFlowRegularization;
    p.var_lb(nc + l) = net.lines[std::size_t(l)].f_min / base;
    p.var_ub(nc + l) = net.lines[std::size_t(l)].f_max / base;
  }
  p.A = Matrix::Zero(na, n);
  p.A.rightCols(nl) = detail::incidence(net);
  for (Eigen::Index k = 0; k < nc; ++k) p.A(curt[std::size_t(k)], k) = 1.0;
  p.lb = d - g;
  p.ub = d;

  qp::QpSolution sol = qp::solve_qp(p);
  require(sol.status == qp::Status::Optimal, ErrorKind::Numeric, "dispatch: curtailment QP is infeasible");
  qp::QuadProgram exact = p;
  exact.Q.bottomRightCorner(nl, nl).setZero();
  if (auto refined = qp::refine_on_face(exact, sol, detail::kRefineTol)) sol = std::move(*refined);
  for (Eigen::Index k = 0; k < nc; ++k)
    out.curtailment(curt[std::size_t(k)]) = std::clamp(sol.primal(k), 0.0, d(curt[std::size_t(k)])) * base;
  out.flows = sol.primal.tail(nl) * base;
  out.epns = out.curtailment.sum();
  if (out.epns < kEpnsZeroThreshold) out.epns = 0.0;
  return out;
}

// Largest proportional demand increase k * sum(d) the state absorbs without
// curtailment (LP over flows and k). The caller guarantees no shortfall.
inline double margin_unchecked(const NetworkModel& net, const SystemState& state) {
  const auto na = Eigen::Index(net.size());
  const auto nl = Eigen::Index(net.lines.size());
  const double total = state.demand.sum();
  if (!(total > 0.0)) return 0.0;
  const double base = detail::per_unit_base(net, state);
  const Vector d = state.demand / base;
  const Vector g = state.available_gen / base;

  qp::LinearProgram lp;
  lp.c = Vector::Zero(nl + 1);
  lp.c(nl) = -d.sum();
  lp.var_lb = Vector::Constant(nl + 1, -qp::kInf);
  lp.var_ub = Vector::Constant(nl + 1, qp::kInf);
  for (Eigen::Index l = 0; l < nl; ++l) {
    lp.var_lb(l) = net.lines[std::size_t(l)].f_min / base;
    lp.var_ub(l) = net.lines[std::size_t(l)].f_max / base;
  }
  lp.A = Matrix::Zero(na, nl + 1);
  lp.A.leftCols(nl) = detail::incidence(net);
  lp.A.col(nl) = -d;
  lp.lb = d - g;
  lp.ub = d;
  const qp::LpSolution sol = qp::solve_lp_via_regularization(lp);
  require(sol.status == qp::Status::Optimal, ErrorKind::Numeric, "margin: LP is infeasible");
  return std::max(0.0, sol.primal(nl)) * total;
}

inline double margin(const NetworkModel& net, const SystemState& state) {
  detail::check_state(net, state);
  require(dispatch(net, state).epns == 0.0, ErrorKind::Domain, "margin: state has a shortfall");
  return margin_unchecked(net, state);
}

enum class Metric { EPNS, EENS, LOLE };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::EPNS: return "EPNS";
    case Metric::EENS: return "EENS";
    case Metric::LOLE: return "LOLE";
  }
  return "?";
}

// EPNS in MW; EENS in MWh/y; LOLE in h/y.
inline double impact(double epns, Metric metric) {
  const double e = epns < kEpnsZeroThreshold ? 0.0 : epns;
  switch (metric) {
    case Metric::EPNS: return e;
    case Metric::EENS: return kHoursPerYear * e;
    case Metric::LOLE: return e > 0.0 ? kHoursPerYear : 0.0;
  }
  return 0.0;
}

inline double impact(const NetworkModel& net, const SystemState& state, Metric metric) {
  return impact(dispatch(net, state).epns, metric);
}

enum class LabelKind { TotalLoad, EensExtended };

struct FeatureLabel {
  double value = 0.0;  // MW for total load, MWh/y for the EENS label
  LabelKind kind = LabelKind::TotalLoad;
};

inline FeatureLabel label_f_total_load(const Vector& demand) {
  require((demand.array() >= 0).all(), ErrorKind::Domain, "label_f_total_load: negative demand");
  return {demand.sum(), LabelKind::TotalLoad};
}

// Mean EENS over k generation draws when positive, otherwise minus the
// smallest margin over the same draws, both in MWh/y.
inline FeatureLabel label_f_eens(const Vector& demand, const NetworkModel& net, Rng& rng, int k = 100) {
  require(k >= 1, ErrorKind::Domain, "label_f_eens: k must be >= 1");
  double epns_sum = 0.0;
  std::vector<SystemState> states;
  states.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    SystemState s{sample_generation(net, rng), demand};
    epns_sum += dispatch(net, s).epns;
    states.push_back(std::move(s));
  }
  const double mean = epns_sum / double(k);
  if (mean > 0.0) return {kHoursPerYear * mean, LabelKind::EensExtended};
  double min_margin = qp::kInf;
  for (const auto& s : states) min_margin = std::min(min_margin, margin_unchecked(net, s));
  return {-kHoursPerYear * min_margin, LabelKind::EensExtended};
}

}  // namespace ovae::adequacy
