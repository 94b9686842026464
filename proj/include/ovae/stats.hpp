#pragma once

// Risk estimators, the speedup measure, rank correlation and the two-sample
// tests used to judge generated demand states.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/adequacy.hpp"
#include "ovae/error.hpp"
#include "ovae/model.hpp"
#include "ovae/nn.hpp"
#include "ovae/parallel.hpp"
#include "ovae/rng.hpp"

namespace ovae::stats {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct RiskEstimate {
  adequacy::Metric metric = adequacy::Metric::LOLE;
  double value = 0.0;
  double std_error = 0.0;
  long long n_samples = 0;
  double wall_time_s = 0.0;
};

inline nlohmann::json to_json(const RiskEstimate& e) {
  return {{"metric", adequacy::to_string(e.metric)}, {"value", e.value}, {"std_error", e.std_error},
          {"n_samples", e.n_samples}, {"wall_time_s", e.wall_time_s}};
}

inline RiskEstimate mc_estimate(std::span<const double> impacts, adequacy::Metric metric = adequacy::Metric::LOLE) {
  const std::size_t n = impacts.size();
  require(n >= 2, ErrorKind::Domain, "mc_estimate: at least two samples required");
  double sum = 0.0;
  for (double h : impacts) {
    require(std::isfinite(h), ErrorKind::Numeric, "mc_estimate: non-finite impact");
    sum += h;
  }
  const double mean = sum / double(n);
  double ss = 0.0;
  for (double h : impacts) ss += (h - mean) * (h - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  return {metric, mean, sd / std::sqrt(double(n)), static_cast<long long>(n), 0.0};
}

inline RiskEstimate is_estimate(std::span<const double> impacts, std::span<const double> weights,
                                adequacy::Metric metric = adequacy::Metric::LOLE) {
  require(impacts.size() == weights.size(), ErrorKind::Dimension, "is_estimate: impacts and weights differ in length");
  std::vector<double> hw(impacts.size());
  for (std::size_t i = 0; i < hw.size(); ++i) {
    require(weights[i] >= 0.0 && std::isfinite(weights[i]), ErrorKind::Domain,
            "is_estimate: weights must be finite and nonnegative");
    hw[i] = impacts[i] * weights[i];
  }
  return mc_estimate(hw, metric);
}

// Relative efficiency of estimator A over B: (r_A^2 t_B SE_B^2) / (r_B^2 t_A SE_A^2).
inline double speedup(const RiskEstimate& a, const RiskEstimate& b) {
  require(a.value > 0.0 && b.value > 0.0, ErrorKind::Domain, "speedup: both estimates must be positive");
  require(a.std_error > 0.0 && b.std_error > 0.0 && a.wall_time_s > 0.0 && b.wall_time_s > 0.0, ErrorKind::Domain,
          "speedup: standard errors and wall times must be positive");
  const double ra = a.value / a.std_error;
  const double rb = b.value / b.std_error;
  return (ra * ra * b.wall_time_s) / (rb * rb * a.wall_time_s);
}

// ---------------------------------------------------------------------------
// Rank correlation

inline double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::Dimension, "pearson: equal lengths >= 2 required");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::Dimension, "spearman: equal lengths >= 2 required");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Survival function of the Kolmogorov distribution.
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  if (lambda < 1.18) {
    // Small-lambda series (Jacobi theta form) converges faster here.
    const double y = std::exp(-M_PI * M_PI / (8.0 * lambda * lambda));
    double s = 0.0;
    for (int k = 1; k <= 9; k += 2) s += std::pow(y, double(k * k));
    return std::clamp(1.0 - std::sqrt(2.0 * M_PI) / lambda * s, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline KsResult ks_test(std::span<const double> a, std::span<const double> b) {
  require(!a.empty() && !b.empty(), ErrorKind::Domain, "ks_test: both samples must be nonempty");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = double(sa.size()), nb = double(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / na - double(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  return {d, d == 0.0 ? 1.0 : kolmogorov_q(lambda)};
}

// ---------------------------------------------------------------------------
// Energy test (V-statistic with pairwise Euclidean distances, rows = points)

struct EnergyResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int permutations = 0;
};

namespace detail {

inline Matrix pairwise_distances(const Matrix& pts) {
  const Eigen::Index n = pts.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (pts.row(i) - pts.row(j)).norm();
  return d;
}

// Statistic for the split where in_a[i] marks membership of sample A.
inline double energy_from_distances(const Matrix& d, const std::vector<unsigned char>& in_a, double total_upper) {
  const Eigen::Index n = d.rows();
  double sa = 0.0, sb = 0.0;
  long long na = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    na += in_a[std::size_t(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      if (in_a[std::size_t(i)] && in_a[std::size_t(j)]) sa += d(i, j);
      else if (!in_a[std::size_t(i)] && !in_a[std::size_t(j)]) sb += d(i, j);
    }
  }
  const double m = double(na), k = double(n - na);
  const double cross = total_upper - sa - sb;
  const double between = 2.0 * cross / (m * k);
  const double e = between - 2.0 * sa / (m * m) - 2.0 * sb / (k * k);
  // Cancellation noise for identical multisets.
  if (e <= 1e-12 * between) return 0.0;
  return m * k / (m + k) * e;
}

}  // namespace detail

inline double energy_statistic(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorKind::Dimension, "energy_statistic: samples must have the same column count");
  require(a.rows() > 0 && b.rows() > 0, ErrorKind::Domain, "energy_statistic: samples must be nonempty");
  Matrix pts(a.rows() + b.rows(), a.cols());
  pts << a, b;
  const Matrix d = detail::pairwise_distances(pts);
  std::vector<unsigned char> in_a(std::size_t(pts.rows()), 0);
  std::fill(in_a.begin(), in_a.begin() + a.rows(), 1);
  return detail::energy_from_distances(d, in_a, d.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().sum());
}

inline EnergyResult energy_test(const Matrix& a, const Matrix& b, Rng& rng, int permutations = 200) {
  require(a.cols() == b.cols(), ErrorKind::Dimension, "energy_test: samples must have the same column count");
  require(a.rows() > 0 && b.rows() > 0, ErrorKind::Domain, "energy_test: samples must be nonempty");
  require(permutations >= 1, ErrorKind::Domain, "energy_test: permutations must be >= 1");
  Matrix pts(a.rows() + b.rows(), a.cols());
  pts << a, b;
  const Matrix d = detail::pairwise_distances(pts);
  double total = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = i + 1; j < d.rows(); ++j) total += d(i, j);
  std::vector<unsigned char> in_a(std::size_t(pts.rows()), 0);
  std::fill(in_a.begin(), in_a.begin() + a.rows(), 1);
  const double observed = detail::energy_from_distances(d, in_a, total);
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(in_a.begin(), in_a.end(), rng);
    if (detail::energy_from_distances(d, in_a, total) >= observed * (1.0 - 1e-12)) ++exceed;
  }
  return {observed, double(exceed + 1) / double(permutations + 1), permutations};
}

// ---------------------------------------------------------------------------
// Autoencoder test: a plain deterministic autoencoder trained on the training
// states; the distribution of reconstruction errors on other state sets is
// compared against the test-set errors.

struct AeConfig {
  std::vector<int> hidden{64, 64, 64};
  int latent_dim = 4;
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;

  void validate() const {
    require(latent_dim >= 1 && epochs >= 1 && batch_size >= 1, ErrorKind::Config,
            "AeConfig: latent_dim, epochs and batch_size must be positive");
    require(learning_rate > 0.0, ErrorKind::Config, "AeConfig: learning_rate must be positive");
    for (int h : hidden) require(h >= 1, ErrorKind::Config, "AeConfig: hidden sizes must be positive");
  }
};

struct Autoencoder {
  nn::Mlp encoder;
  nn::Mlp decoder;
};

// states: d x N, already normalized.
inline Autoencoder train_autoencoder(const Matrix& states, const AeConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = states.cols();
  const int d = int(states.rows());
  require(n > 0 && d > 0, ErrorKind::Domain, "train_autoencoder: empty training set");
  Rng init = make_rng(cfg.seed, streams::kStatTests, 1);
  std::vector<int> enc_sizes{d}, dec_sizes{cfg.latent_dim};
  for (int h : cfg.hidden) enc_sizes.push_back(h);
  enc_sizes.push_back(cfg.latent_dim);
  for (auto it = cfg.hidden.rbegin(); it != cfg.hidden.rend(); ++it) dec_sizes.push_back(*it);
  dec_sizes.push_back(d);
  Autoencoder ae{nn::Mlp::make(enc_sizes, nn::Activation::ReLU, init, 1.0),
                 nn::Mlp::make(dec_sizes, nn::Activation::ReLU, init, 1.0)};

  auto params = nn::parameter_blocks(ae.encoder, "ae.encoder");
  for (auto& p : nn::parameter_blocks(ae.decoder, "ae.decoder")) params.push_back(std::move(p));
  nn::AdamState adam = nn::make_adam(params, cfg.learning_rate);

  Rng rng = make_rng(cfg.seed, streams::kStatTests, 2);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Matrix x(d, b);
      for (Eigen::Index k = 0; k < b; ++k) x.col(k) = states.col(order[std::size_t(start + k)]);
      nn::ForwardCache ce, cd;
      const Matrix code = nn::forward(ae.encoder, x, &ce);
      const Matrix recon = nn::forward(ae.decoder, code, &cd);
      // Loss: batch mean of squared reconstruction error.
      const Matrix g_out = 2.0 * (recon - x) / double(b);
      const nn::MlpGradients gd = nn::backward(ae.decoder, cd, g_out);
      const nn::MlpGradients ge = nn::backward(ae.encoder, ce, gd.input);
      auto grads = nn::gradient_blocks(ge);
      for (auto g : nn::gradient_blocks(gd)) grads.push_back(g);
      nn::adam_step(params, grads, adam);
      ae.encoder.touch();
      ae.decoder.touch();
    }
  }
  return ae;
}

// Squared reconstruction error per column of `states` (normalized units).
inline std::vector<double> reconstruction_errors(const Autoencoder& ae, const Matrix& states) {
  const Matrix recon = nn::forward(ae.decoder, nn::forward(ae.encoder, states));
  std::vector<double> err(std::size_t(states.cols()));
  for (Eigen::Index i = 0; i < states.cols(); ++i) err[std::size_t(i)] = (recon.col(i) - states.col(i)).squaredNorm();
  return err;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorKind::Domain, "median: empty input");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m), v.end());
  const double hi = v[m];
  if (v.size() % 2) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + std::ptrdiff_t(m)));
}

struct ErrorSummary {
  double median = 0.0;
  double mean = 0.0;
  double q90 = 0.0;
  std::size_t count = 0;
};

inline ErrorSummary summarize_errors(std::vector<double> err) {
  require(!err.empty(), ErrorKind::Domain, "summarize_errors: empty input");
  ErrorSummary s;
  s.count = err.size();
  s.mean = std::accumulate(err.begin(), err.end(), 0.0) / double(err.size());
  s.median = median(err);
  std::sort(err.begin(), err.end());
  s.q90 = err[std::min(err.size() - 1, std::size_t(std::ceil(0.9 * double(err.size()))) - 1)];
  return s;
}

// ---------------------------------------------------------------------------
// Repeated-subsample comparison between reference and candidate states.

enum class TestKind { KS, Energy, Autoencoder };

inline const char* to_string(TestKind k) {
  switch (k) {
    case TestKind::KS: return "ks";
    case TestKind::Energy: return "energy";
    case TestKind::Autoencoder: return "autoencoder";
  }
  return "?";
}

struct TestReport {
  TestKind test = TestKind::KS;
  std::vector<std::vector<double>> p_values;  // [repetition][column]; one column for the energy test
  int repetitions = 0;
  int subsample_size = 0;
  ErrorSummary errors;                        // autoencoder test only
  std::vector<double> error_values;           // autoencoder test only
};

namespace detail {

inline std::vector<Eigen::Index> subsample(Eigen::Index n, int k, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index(0));
  const std::size_t take = std::min<std::size_t>(std::size_t(k), idx.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  return idx;
}

}  // namespace detail

// States are d x N in physical units. KS compares each area's marginal.
inline TestReport repeated_ks(const Matrix& reference, const Matrix& candidate, int repetitions, int subsample_size,
                              std::uint64_t seed, unsigned threads = 1) {
  require(reference.rows() == candidate.rows(), ErrorKind::Dimension, "repeated_ks: area counts differ");
  require(repetitions >= 1 && subsample_size >= 1, ErrorKind::Domain, "repeated_ks: bad repetition settings");
  TestReport rep{TestKind::KS, std::vector<std::vector<double>>(std::size_t(repetitions)), repetitions,
                 subsample_size, {}, {}};
  parallel_for(std::size_t(repetitions), threads, [&](std::size_t r) {
    Rng rng = make_rng(seed, streams::kStatTests, 100 + r);
    const auto ia = detail::subsample(reference.cols(), subsample_size, rng);
    const auto ib = detail::subsample(candidate.cols(), subsample_size, rng);
    for (Eigen::Index area = 0; area < reference.rows(); ++area) {
      std::vector<double> a, b;
      for (auto i : ia) a.push_back(reference(area, i));
      for (auto i : ib) b.push_back(candidate(area, i));
      rep.p_values[r].push_back(ks_test(a, b).p_value);
    }
  });
  return rep;
}

inline TestReport repeated_energy(const Matrix& reference, const Matrix& candidate, int repetitions,
                                  int subsample_size, int permutations, std::uint64_t seed, unsigned threads = 1) {
  require(reference.rows() == candidate.rows(), ErrorKind::Dimension, "repeated_energy: area counts differ");
  require(repetitions >= 1 && subsample_size >= 1, ErrorKind::Domain, "repeated_energy: bad repetition settings");
  TestReport rep{TestKind::Energy, std::vector<std::vector<double>>(std::size_t(repetitions)), repetitions,
                 subsample_size, {}, {}};
  parallel_for(std::size_t(repetitions), threads, [&](std::size_t r) {
    Rng rng = make_rng(seed, streams::kStatTests, 100000 + r);
    const auto ia = detail::subsample(reference.cols(), subsample_size, rng);
    const auto ib = detail::subsample(candidate.cols(), subsample_size, rng);
    Matrix a(ia.size(), reference.rows()), b(ib.size(), candidate.rows());
    for (std::size_t k = 0; k < ia.size(); ++k) a.row(Eigen::Index(k)) = reference.col(ia[k]).transpose();
    for (std::size_t k = 0; k < ib.size(); ++k) b.row(Eigen::Index(k)) = candidate.col(ib[k]).transpose();
    rep.p_values[r].push_back(energy_test(a, b, rng, permutations).p_value);
  });
  return rep;
}

inline TestReport autoencoder_test(const Autoencoder& ae, const Matrix& normalized_states) {
  TestReport rep;
  rep.test = TestKind::Autoencoder;
  rep.error_values = reconstruction_errors(ae, normalized_states);
  rep.errors = summarize_errors(rep.error_values);
  rep.repetitions = 1;
  rep.subsample_size = int(normalized_states.cols());
  return rep;
}

inline nlohmann::json summary_json(const TestReport& r) {
  nlohmann::json j{{"test", to_string(r.test)}, {"repetitions", r.repetitions}, {"subsample_size", r.subsample_size}};
  if (r.test == TestKind::Autoencoder) {
    j["errors"] = {{"median", r.errors.median}, {"mean", r.errors.mean}, {"q90", r.errors.q90}, {"count", r.errors.count}};
    return j;
  }
  std::vector<double> all;
  for (const auto& row : r.p_values) all.insert(all.end(), row.begin(), row.end());
  if (all.empty()) return j;
  double below = 0.0;
  for (double p : all) below += p < 0.05 ? 1.0 : 0.0;
  j["p_value_median"] = median(all);
  j["p_value_mean"] = std::accumulate(all.begin(), all.end(), 0.0) / double(all.size());
  j["fraction_below_0_05"] = below / double(all.size());
  return j;
}

}  // namespace ovae::stats
