#pragma once

// Importance sampling in the latent space. Only z1 is biased, towards a
// defensive mixture q(z1) = alpha N(0,1) + (1 - alpha) N(mu_is, sigma_is^2);
// the other coordinates stay standard normal. Weights are N(z1;0,1)/q(z1),
// bounded by 1/alpha.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/error.hpp"
#include "ovae/parallel.hpp"
#include "ovae/rng.hpp"

namespace ovae::latent {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kSigmaFloor = 1e-3;

struct ISConfig {
  double alpha = 0.1;
  double mu_is = 0.0;
  double sigma_is = 1.0;

  void validate() const {
    require(alpha > 0.0 && alpha <= 1.0, ErrorKind::Domain, "ISConfig: alpha must lie in (0,1]");
    require(sigma_is > 0.0 && std::isfinite(sigma_is) && std::isfinite(mu_is), ErrorKind::Domain,
            "ISConfig: sigma_is must be positive and parameters finite");
  }
};

inline nlohmann::json to_json(const ISConfig& c) {
  return {{"alpha", c.alpha}, {"mu_is", c.mu_is}, {"sigma_is", c.sigma_is}};
}

inline ISConfig is_config_from_json(const nlohmann::json& j) {
  ISConfig c{j.at("alpha").get<double>(), j.at("mu_is").get<double>(), j.at("sigma_is").get<double>()};
  c.validate();
  return c;
}

// Biased density q(z1).
inline double latent_density(const ISConfig& cfg, double z1) {
  return cfg.alpha * normal_pdf(z1) + (1.0 - cfg.alpha) * normal_pdf(z1, cfg.mu_is, cfg.sigma_is);
}

inline double is_weight(const ISConfig& cfg, double z1) {
  cfg.validate();
  if (cfg.alpha == 1.0) return 1.0;
  // Divide through by N(z1;0,1) so far tails do not produce 0/0.
  const double u = (z1 - cfg.mu_is) / cfg.sigma_is;
  const double log_ratio = -0.5 * u * u + 0.5 * z1 * z1 - std::log(cfg.sigma_is);
  return 1.0 / (cfg.alpha + (1.0 - cfg.alpha) * std::exp(log_ratio));
}

inline Vector sample_latent(const ISConfig& cfg, int latent_dim, Rng& rng) {
  cfg.validate();
  require(latent_dim >= 1, ErrorKind::Domain, "sample_latent: latent dimension must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector z(latent_dim);
  const bool from_prior = unif(rng) < cfg.alpha;
  const double e = normal(rng);
  z(0) = from_prior ? e : cfg.mu_is + cfg.sigma_is * e;
  for (int l = 1; l < latent_dim; ++l) z(l) = normal(rng);
  return z;
}

// n codes as columns of an L x n matrix.
inline Matrix sample_latent_batch(const ISConfig& cfg, int latent_dim, Eigen::Index n, Rng& rng) {
  Matrix z(latent_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) z.col(i) = sample_latent(cfg, latent_dim, rng);
  return z;
}

// ---------------------------------------------------------------------------
// EM for (mu_is, sigma_is) with the N(0,1) component and alpha held fixed.

struct WeightedPilot {
  std::vector<double> z1_values;
  std::vector<double> weights;
};

struct EmResult {
  ISConfig config;
  std::vector<double> log_likelihood;  // weighted, one entry per iteration (incl. start)
  int iterations = 0;
  bool converged = false;
};

inline double weighted_log_likelihood(const WeightedPilot& pilot, const ISConfig& cfg) {
  double ll = 0.0;
  for (std::size_t i = 0; i < pilot.z1_values.size(); ++i)
    if (pilot.weights[i] > 0.0) ll += pilot.weights[i] * std::log(latent_density(cfg, pilot.z1_values[i]));
  return ll;
}

inline EmResult fit_em(const WeightedPilot& pilot, double alpha, const ISConfig& init, int max_iter = 200,
                       double tol = 1e-8) {
  require(pilot.z1_values.size() == pilot.weights.size(), ErrorKind::Dimension,
          "fit_em: z1 values and weights differ in length");
  double total_w = 0.0;
  for (double w : pilot.weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorKind::Domain, "fit_em: weights must be finite and nonnegative");
    total_w += w;
  }
  require(total_w > 0.0, ErrorKind::Domain, "fit_em: no shortfall states in pilot");
  require(alpha >= 0.0 && alpha < 1.0, ErrorKind::Domain, "fit_em: alpha must lie in [0,1)");

  ISConfig cfg{alpha, init.mu_is, std::max(init.sigma_is, kSigmaFloor)};
  EmResult res;
  // alpha = 0 is allowed here (pure fit); latent_density still works.
  auto ll_of = [&](const ISConfig& c) { return weighted_log_likelihood(pilot, c); };
  res.log_likelihood.push_back(ll_of(cfg));
  const std::size_t n = pilot.z1_values.size();
  for (int it = 0; it < max_iter; ++it) {
    double sw = 0.0, swz = 0.0;
    std::vector<double> resp(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (pilot.weights[i] <= 0.0) continue;
      const double z = pilot.z1_values[i];
      const double tuned = (1.0 - alpha) * normal_pdf(z, cfg.mu_is, cfg.sigma_is);
      const double mix = alpha * normal_pdf(z) + tuned;
      // Points far from both components: assign to the tuned one.
      resp[i] = mix > 0.0 ? tuned / mix : 1.0;
      sw += pilot.weights[i] * resp[i];
      swz += pilot.weights[i] * resp[i] * z;
    }
    if (!(sw > 0.0)) break;
    const double mu = swz / sw;
    double sv = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pilot.weights[i] > 0.0) sv += pilot.weights[i] * resp[i] * (pilot.z1_values[i] - mu) * (pilot.z1_values[i] - mu);
    cfg.mu_is = mu;
    cfg.sigma_is = std::max(kSigmaFloor, std::sqrt(sv / sw));
    const double ll = ll_of(cfg);
    const double prev = res.log_likelihood.back();
    res.log_likelihood.push_back(ll);
    res.iterations = it + 1;
    require(ll >= prev - 1e-9 * (1.0 + std::abs(prev)), ErrorKind::Numeric,
            "fit_em: weighted log-likelihood decreased at iteration " + std::to_string(it + 1));
    if (std::abs(ll - prev) <= tol * (1.0 + std::abs(prev))) {
      res.converged = true;
      break;
    }
  }
  res.config = cfg;
  return res;
}

// Default starting point: weighted mean and standard deviation of the pilot.
inline ISConfig em_initial_guess(const WeightedPilot& pilot, double alpha) {
  double sw = 0.0, swz = 0.0, swzz = 0.0;
  for (std::size_t i = 0; i < pilot.z1_values.size(); ++i) {
    sw += pilot.weights[i];
    swz += pilot.weights[i] * pilot.z1_values[i];
    swzz += pilot.weights[i] * pilot.z1_values[i] * pilot.z1_values[i];
  }
  if (!(sw > 0.0)) return {alpha, 0.0, 1.0};
  const double mean = swz / sw;
  return {alpha, mean, std::max(kSigmaFloor, std::sqrt(std::max(0.0, swzz / sw - mean * mean)))};
}

// ---------------------------------------------------------------------------
// Pilot weights

using WeightFunction = std::function<double(const adequacy::DispatchResult&)>;

inline double shortfall_indicator(const adequacy::DispatchResult& r) { return r.epns > 0.0 ? 1.0 : 0.0; }

// Pairs each demand state (columns of `demands`, MW) with one generation draw
// from a per-state stream and weighs it; the default weight is the shortfall
// indicator.
inline WeightedPilot pilot_weights(std::span<const double> z1_values, const Matrix& demands,
                                   const adequacy::NetworkModel& net, std::uint64_t seed, unsigned threads = 1,
                                   const WeightFunction& weight = shortfall_indicator) {
  require(std::size_t(demands.cols()) == z1_values.size(), ErrorKind::Dimension,
          "pilot_weights: one z1 value per demand state required");
  require(demands.rows() == Eigen::Index(net.size()), ErrorKind::Dimension,
          "pilot_weights: demand rows must match the area count");
  WeightedPilot pilot;
  pilot.z1_values.assign(z1_values.begin(), z1_values.end());
  pilot.weights.assign(z1_values.size(), 0.0);
  parallel_for(z1_values.size(), threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, streams::kPilot, i);
    const adequacy::SystemState s{adequacy::sample_generation(net, rng), demands.col(Eigen::Index(i))};
    pilot.weights[i] = weight(adequacy::dispatch(net, s));
  });
  return pilot;
}

}  // namespace ovae::latent
