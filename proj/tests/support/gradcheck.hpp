#pragma once

// Finite-difference checks of the OVAE batch loss on tiny random models.

#include <numeric>

#include "ovae/model.hpp"
#include "support/oracles.hpp"

namespace gradcheck {

using ovae::Matrix;
using ovae::Vector;

struct Problem {
  ovae::OvaeModel model;
  ovae::TrainBatch batch;
  Matrix eps;
};

// d <= 4 inputs, hidden widths <= 8, L = 2. The feature CDF has evenly spaced
// values so its inverse is linear between the clamps and the loss is smooth.
inline Problem make_problem(std::uint64_t seed) {
  ovae::Rng rng(seed);
  std::uniform_int_distribution<int> width(2, 8);
  ovae::OvaeConfig cfg;
  cfg.latent_dim = 2;
  cfg.hidden = {width(rng), width(rng)};
  cfg.seed = seed;
  const int d = 3;
  ovae::data::NormStats norm{{0, 0, 0}, {1, 1, 1}, {false, false, false}};
  Problem p{ovae::OvaeModel::initialize(d, cfg, norm), {}, {}};
  std::normal_distribution<double> N(0.0, 1.0);
  for (auto* mlp : {&p.model.encoder, &p.model.decoder})
    for (auto& layer : mlp->mutable_layers()) {
      for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = 0.6 * N(rng);
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = 0.2 * N(rng);
    }
  std::vector<double> grid(41);
  for (std::size_t k = 0; k < grid.size(); ++k) grid[k] = -2.0 + 0.1 * double(k);
  p.model.feature_cdf = ovae::EmpiricalCdf(grid);
  p.model.log_var_f = 0.3;
  const int b = 6;
  p.batch.states = ovae::standard_normal_matrix(d, b, rng) * 0.5;
  p.batch.labels.resize(b);
  p.batch.mask.resize(b);
  for (int i = 0; i < b; ++i) {
    p.batch.labels[std::size_t(i)] = 0.5 * N(rng);
    p.batch.mask[std::size_t(i)] = i % 3 != 1;
  }
  p.eps = ovae::standard_normal_matrix(2, b, rng);
  return p;
}

inline Vector flatten(ovae::OvaeModel& m) {
  std::vector<double> v;
  for (auto* mlp : {&m.encoder, &m.decoder})
    for (const auto& b : ovae::nn::parameter_blocks(*mlp, "p")) v.insert(v.end(), b.values.begin(), b.values.end());
  v.push_back(m.log_var_f);
  return Eigen::Map<Vector>(v.data(), Eigen::Index(v.size()));
}

inline void assign(ovae::OvaeModel& m, const Vector& theta) {
  Eigen::Index k = 0;
  for (auto* mlp : {&m.encoder, &m.decoder})
    for (const auto& b : ovae::nn::parameter_blocks(*mlp, "p"))
      for (auto& x : b.values) x = theta(k++);
  m.log_var_f = theta(k);
}

inline Vector flatten(const ovae::OvaeGradients& g) {
  std::vector<double> v;
  for (const auto* mg : {&g.encoder, &g.decoder})
    for (const auto& b : ovae::nn::gradient_blocks(*mg)) v.insert(v.end(), b.begin(), b.end());
  v.push_back(g.log_var_f);
  return Eigen::Map<Vector>(v.data(), Eigen::Index(v.size()));
}

// Max relative error between the analytic gradient of the total batch loss
// (weights beta on KL, orientation on/off) and central differences.
inline double max_error(Problem p, double beta, bool orientation) {
  const auto ev = ovae::evaluate_batch(p.model, p.batch, p.eps, beta, orientation);
  const Vector analytic = flatten(ev.grad);
  const Vector theta = flatten(p.model);
  auto loss = [&](const Vector& t) {
    ovae::OvaeModel m = p.model;
    assign(m, t);
    return ovae::evaluate_batch(m, p.batch, p.eps, beta, orientation).loss.total;
  };
  return oracle::max_rel_error(analytic, oracle::fd_gradient(loss, theta, 1e-4));
}

}  // namespace gradcheck
