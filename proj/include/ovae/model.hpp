#pragma once

// Oriented variational autoencoder: probabilistic encoder/decoder, the KL,
// reconstruction and orientation losses, semi-supervised training and
// generation.
//
// Heads emit log-variances: the encoder produces (mu, log sigma^2) of size
// 2L, the decoder (mu', log sigma'^2) of size 2d. All losses are batch means;
// the orientation loss averages over labeled rows only.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/data.hpp"
#include "ovae/error.hpp"
#include "ovae/nn.hpp"
#include "ovae/rng.hpp"

namespace ovae {

using nn::Matrix;
using nn::Vector;

// ---------------------------------------------------------------------------
// Empirical CDF with a fixed inverse: plotting positions (k - 0.5)/n,
// linear interpolation between order statistics, clamped outside.

class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;

  explicit EmpiricalCdf(std::vector<double> values) : sorted_(std::move(values)) {
    require(!sorted_.empty(), ErrorKind::Domain, "EmpiricalCdf needs at least one value");
    for (double v : sorted_) require(std::isfinite(v), ErrorKind::Numeric, "EmpiricalCdf: non-finite value");
    std::sort(sorted_.begin(), sorted_.end());
  }

  bool empty() const { return sorted_.empty(); }
  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted_values() const { return sorted_; }

  struct Point {
    double value;
    double slope;  // dQ/dp; 0 in the clamped tails
  };

  Point quantile_with_slope(double p) const {
    require(!sorted_.empty(), ErrorKind::Domain, "quantile of an empty EmpiricalCdf");
    const auto n = double(sorted_.size());
    const double pos = p * n + 0.5;  // 1-based fractional order-statistic index
    if (sorted_.size() == 1 || !(pos > 1.0)) return {sorted_.front(), 0.0};
    if (pos >= n) return {sorted_.back(), 0.0};
    const auto k = std::size_t(std::floor(pos));  // 1 <= k < n
    const double frac = pos - double(k);
    const double lo = sorted_[k - 1], hi = sorted_[k];
    return {lo + frac * (hi - lo), (hi - lo) * n};
  }

  double quantile(double p) const { return quantile_with_slope(p).value; }

 private:
  std::vector<double> sorted_;
};

// Target feature value for latent coordinate z1: F^-1(Phi(z1)).
inline double orientation_target(const EmpiricalCdf& cdf, double z1) {
  return cdf.quantile(normal_cdf(z1));
}

// d/dz1 of orientation_target (piecewise; one-sided at knots).
inline double orientation_target_derivative(const EmpiricalCdf& cdf, double z1) {
  return cdf.quantile_with_slope(normal_cdf(z1)).slope * normal_pdf(z1);
}

// ---------------------------------------------------------------------------
// Loss terms in (mu, sigma) form.

struct KlTerms {
  double total = 0.0;
  std::vector<double> per_dim;
};

inline KlTerms kl_loss(const Matrix& mu, const Matrix& sigma) {
  require(mu.rows() == sigma.rows() && mu.cols() == sigma.cols() && mu.cols() > 0, ErrorKind::Dimension,
          "kl_loss: mu and sigma batches differ in shape");
  require((sigma.array() > 0.0).all(), ErrorKind::Domain, "kl_loss: sigma must be positive");
  const auto var = sigma.array().square();
  const Matrix term = 0.5 * (-1.0 + var + mu.array().square() - var.log());
  KlTerms out;
  const double b = double(mu.cols());
  for (Eigen::Index j = 0; j < term.rows(); ++j) out.per_dim.push_back(term.row(j).sum() / b);
  out.total = std::accumulate(out.per_dim.begin(), out.per_dim.end(), 0.0);
  return out;
}

// Gaussian negative log-likelihood without the (d/2) log 2 pi constant.
inline double reconstruction_loss(const Matrix& x, const Matrix& mu, const Matrix& sigma) {
  require(x.rows() == mu.rows() && x.cols() == mu.cols() && mu.rows() == sigma.rows() &&
              mu.cols() == sigma.cols() && x.cols() > 0,
          ErrorKind::Dimension, "reconstruction_loss: shape mismatch");
  require((sigma.array() > 0.0).all(), ErrorKind::Domain, "reconstruction_loss: sigma must be positive");
  const auto var = sigma.array().square();
  return 0.5 * ((x - mu).array().square() / var + var.log()).sum() / double(x.cols());
}

// Mean over labeled rows of (f - F^-1(Phi(z1)))^2 / s2 + log s2, s2 = exp(log_var_f).
// Zero when nothing is labeled.
inline double orientation_loss(std::span<const double> labels, std::span<const unsigned char> mask,
                               std::span<const double> z1, const EmpiricalCdf& cdf, double log_var_f) {
  require(labels.size() == mask.size() && mask.size() == z1.size(), ErrorKind::Dimension,
          "orientation_loss: labels, mask and z1 differ in length");
  double sum = 0.0;
  std::size_t n = 0;
  const double inv_var = std::exp(-log_var_f);
  for (std::size_t i = 0; i < z1.size(); ++i) {
    if (!mask[i]) continue;
    const double r = labels[i] - orientation_target(cdf, z1[i]);
    sum += r * r * inv_var + log_var_f;
    ++n;
  }
  return n == 0 ? 0.0 : sum / double(n);
}

inline double total_loss(double kl, double reconstruction, double orientation, double beta) {
  return beta * kl + reconstruction + orientation;
}

struct LossReport {
  double kl = 0.0;
  double reconstruction = 0.0;
  double orientation = 0.0;
  double total = 0.0;
  std::vector<double> per_latent_kl;
};

// ---------------------------------------------------------------------------
// Model

enum class FeatureKind { TotalLoad, Eens };

inline const char* to_string(FeatureKind k) { return k == FeatureKind::TotalLoad ? "total_load" : "eens"; }

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "total_load") return FeatureKind::TotalLoad;
  if (s == "eens") return FeatureKind::Eens;
  fail(ErrorKind::Config, "unknown feature kind '" + s + "' (expected total_load or eens)");
}

struct OvaeConfig {
  int latent_dim = 4;
  std::vector<int> hidden{64, 64, 64};
  double beta = 5.0;
  int epochs = 650;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
  double labeled_fraction = 1.0;
  bool orientation = true;  // false gives a plain beta-VAE

  void validate() const {
    require(latent_dim >= 1, ErrorKind::Config, "ovae: latent_dim must be >= 1");
    require(!hidden.empty(), ErrorKind::Config, "ovae: at least one hidden layer is required");
    for (int h : hidden) require(h >= 1, ErrorKind::Config, "ovae: hidden sizes must be positive");
    require(beta >= 0.0 && std::isfinite(beta), ErrorKind::Config, "ovae: beta must be finite and >= 0");
    require(epochs >= 1 && batch_size >= 1, ErrorKind::Config, "ovae: epochs and batch_size must be >= 1");
    require(learning_rate > 0.0, ErrorKind::Config, "ovae: learning_rate must be positive");
    require(labeled_fraction >= 0.0 && labeled_fraction <= 1.0, ErrorKind::Config,
            "ovae: labeled_fraction must lie in [0,1]");
  }
};

inline nlohmann::json to_json(const OvaeConfig& c) {
  return {{"latent_dim", c.latent_dim},       {"hidden", c.hidden},
          {"beta", c.beta},                   {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"learning_rate", c.learning_rate},
          {"seed", c.seed},                   {"labeled_fraction", c.labeled_fraction},
          {"orientation", c.orientation}};
}

inline OvaeConfig ovae_config_from_json(const nlohmann::json& j) {
  OvaeConfig c;
  c.latent_dim = j.at("latent_dim").get<int>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.beta = j.at("beta").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.labeled_fraction = j.at("labeled_fraction").get<double>();
  c.orientation = j.at("orientation").get<bool>();
  return c;
}

struct OvaeModel {
  nn::Mlp encoder;  // d -> 2L
  nn::Mlp decoder;  // L -> 2d
  int latent_dim = 0;
  int data_dim = 0;
  data::NormStats norm;
  EmpiricalCdf feature_cdf;  // empty for a plain VAE
  double log_var_f = 0.0;
  bool trained = false;
  OvaeConfig config;

  static OvaeModel initialize(int data_dim, const OvaeConfig& cfg, data::NormStats norm) {
    cfg.validate();
    require(data_dim >= 1, ErrorKind::Domain, "ovae: data_dim must be >= 1");
    require(norm.dims() == std::size_t(data_dim), ErrorKind::Dimension, "ovae: norm stats dimension mismatch");
    Rng rng = make_rng(cfg.seed, streams::kInit);
    std::vector<int> enc{data_dim};
    enc.insert(enc.end(), cfg.hidden.begin(), cfg.hidden.end());
    enc.push_back(2 * cfg.latent_dim);
    std::vector<int> dec{cfg.latent_dim};
    dec.insert(dec.end(), cfg.hidden.rbegin(), cfg.hidden.rend());
    dec.push_back(2 * data_dim);
    OvaeModel m;
    m.encoder = nn::Mlp::make(enc, nn::Activation::ReLU, rng);
    m.decoder = nn::Mlp::make(dec, nn::Activation::ReLU, rng);
    m.latent_dim = cfg.latent_dim;
    m.data_dim = data_dim;
    m.norm = std::move(norm);
    m.config = cfg;
    return m;
  }

  void validate() const {
    require(latent_dim >= 1 && data_dim >= 1, ErrorKind::Domain, "ovae: invalid dimensions");
    require(encoder.input_dim() == data_dim && encoder.output_dim() == 2 * latent_dim, ErrorKind::Dimension,
            "ovae: encoder must map d -> 2L");
    require(decoder.input_dim() == latent_dim && decoder.output_dim() == 2 * data_dim, ErrorKind::Dimension,
            "ovae: decoder must map L -> 2d");
    require(norm.dims() == std::size_t(data_dim), ErrorKind::Dimension, "ovae: norm stats dimension mismatch");
  }
};

struct Gaussian {
  Matrix mu;       // rows = dimension, cols = batch
  Matrix log_var;
  Matrix sigma() const { return (0.5 * log_var.array()).exp().matrix(); }
};

inline Gaussian encode(const OvaeModel& model, const Matrix& x) {
  require(x.allFinite(), ErrorKind::Numeric, "encode: non-finite input");
  const Matrix h = nn::forward(model.encoder, x);
  return {h.topRows(model.latent_dim), h.bottomRows(model.latent_dim)};
}

inline Gaussian decode(const OvaeModel& model, const Matrix& z) {
  require(z.allFinite(), ErrorKind::Numeric, "decode: non-finite latent code");
  const Matrix h = nn::forward(model.decoder, z);
  return {h.topRows(model.data_dim), h.bottomRows(model.data_dim)};
}

inline Matrix reparameterize(const Matrix& mu, const Matrix& sigma, const Matrix& eps) {
  require(mu.rows() == sigma.rows() && mu.cols() == sigma.cols() && mu.rows() == eps.rows() &&
              mu.cols() == eps.cols(),
          ErrorKind::Dimension, "reparameterize: shape mismatch");
  return mu + eps.cwiseProduct(sigma);
}

// ---------------------------------------------------------------------------
// Batch loss and gradients

struct TrainBatch {
  Matrix states;                      // d x B, normalized
  std::vector<double> labels;         // B; ignored where mask == 0
  std::vector<unsigned char> mask;    // B
};

struct OvaeGradients {
  nn::MlpGradients encoder;
  nn::MlpGradients decoder;
  double log_var_f = 0.0;
};

struct BatchEvaluation {
  LossReport loss;
  OvaeGradients grad;
};

// Loss of one batch for fixed reparameterization noise eps (L x B), with
// gradients of the total loss w.r.t. all parameters.
inline BatchEvaluation evaluate_batch(const OvaeModel& model, const TrainBatch& batch, const Matrix& eps,
                                      double beta, bool orientation) {
  const Eigen::Index b = batch.states.cols();
  const int L = model.latent_dim, d = model.data_dim;
  require(b > 0 && batch.states.rows() == d, ErrorKind::Dimension, "evaluate_batch: state batch shape");
  require(eps.rows() == L && eps.cols() == b, ErrorKind::Dimension, "evaluate_batch: eps shape");
  require(batch.labels.size() == std::size_t(b) && batch.mask.size() == std::size_t(b), ErrorKind::Dimension,
          "evaluate_batch: labels/mask length");
  const double inv_b = 1.0 / double(b);

  nn::ForwardCache enc_cache, dec_cache;
  const Matrix he = nn::forward(model.encoder, batch.states, &enc_cache);
  const auto mu = he.topRows(L);
  const auto lv = he.bottomRows(L);
  const Matrix sigma = (0.5 * lv.array()).exp();
  const Matrix z = mu + eps.cwiseProduct(sigma);
  const Matrix hd = nn::forward(model.decoder, z, &dec_cache);
  const auto mu_x = hd.topRows(d);
  const auto lv_x = hd.bottomRows(d);

  BatchEvaluation out;
  LossReport& r = out.loss;

  // KL
  const Matrix kl_term = 0.5 * (-1.0 + lv.array().exp() + mu.array().square() - lv.array());
  for (Eigen::Index j = 0; j < L; ++j) r.per_latent_kl.push_back(kl_term.row(j).sum() * inv_b);
  r.kl = std::accumulate(r.per_latent_kl.begin(), r.per_latent_kl.end(), 0.0);

  // Reconstruction
  const Matrix resid = batch.states - mu_x;
  const Matrix inv_var_x = (-lv_x.array()).exp();
  r.reconstruction = 0.5 * (resid.array().square() * inv_var_x.array() + lv_x.array()).sum() * inv_b;

  Matrix d_hd(2 * d, b);
  d_hd.topRows(d) = -resid.cwiseProduct(inv_var_x) * inv_b;
  d_hd.bottomRows(d) = 0.5 * (1.0 - resid.array().square() * inv_var_x.array()) * inv_b;
  out.grad.decoder = nn::backward(model.decoder, dec_cache, d_hd);
  Matrix dz = out.grad.decoder.input;

  // Orientation
  if (orientation) {
    require(!model.feature_cdf.empty(), ErrorKind::Domain, "evaluate_batch: orientation needs a feature CDF");
    std::size_t n_lab = 0;
    for (auto m : batch.mask) n_lab += m ? 1 : 0;
    if (n_lab > 0) {
      const double inv_var_f = std::exp(-model.log_var_f);
      const double inv_n = 1.0 / double(n_lab);
      double sum = 0.0, d_lvf = 0.0;
      for (Eigen::Index i = 0; i < b; ++i) {
        if (!batch.mask[std::size_t(i)]) continue;
        const double z1 = z(0, i);
        const auto q = model.feature_cdf.quantile_with_slope(normal_cdf(z1));
        const double res = batch.labels[std::size_t(i)] - q.value;
        sum += res * res * inv_var_f + model.log_var_f;
        d_lvf += (1.0 - res * res * inv_var_f) * inv_n;
        dz(0, i) += -2.0 * res * q.slope * normal_pdf(z1) * inv_var_f * inv_n;
      }
      r.orientation = sum * inv_n;
      out.grad.log_var_f = d_lvf;
    }
  }
  r.total = total_loss(r.kl, r.reconstruction, r.orientation, beta);

  Matrix d_he(2 * L, b);
  d_he.topRows(L) = beta * inv_b * mu + dz;
  d_he.bottomRows(L) = (beta * 0.5 * inv_b) * (lv.array().exp() - 1.0).matrix() +
                       0.5 * dz.cwiseProduct(eps).cwiseProduct(sigma);
  out.grad.encoder = nn::backward(model.encoder, enc_cache, d_he);
  return out;
}

// ---------------------------------------------------------------------------
// Labels

// Average ranks (1-based, ties averaged).
inline std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    const double avg = 0.5 * double(i + j + 1);  // mean of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = avg;
    i = j;
  }
  return ranks;
}

// Maps raw labels of the masked rows into training units: min-max scaling to
// [0,1] for total load, normalized ranks in [0,1] for EENS labels. Unmasked
// entries are returned as 0.
inline std::vector<double> prepare_labels(FeatureKind kind, std::span<const double> raw,
                                          std::span<const unsigned char> mask) {
  require(raw.size() == mask.size(), ErrorKind::Dimension, "prepare_labels: length mismatch");
  std::vector<double> sel;
  std::vector<std::size_t> where;
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (mask[i]) {
      require(std::isfinite(raw[i]), ErrorKind::Numeric, "prepare_labels: non-finite label");
      sel.push_back(raw[i]);
      where.push_back(i);
    }
  std::vector<double> out(raw.size(), 0.0);
  if (sel.empty()) return out;
  if (kind == FeatureKind::TotalLoad) {
    const auto [lo, hi] = std::minmax_element(sel.begin(), sel.end());
    const double range = *hi - *lo;
    for (std::size_t k = 0; k < sel.size(); ++k) out[where[k]] = range > 0 ? (sel[k] - *lo) / range : 0.0;
  } else {
    const auto ranks = average_ranks(sel);
    const double denom = sel.size() > 1 ? double(sel.size() - 1) : 1.0;
    for (std::size_t k = 0; k < sel.size(); ++k) out[where[k]] = (ranks[k] - 1.0) / denom;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainingSet {
  Matrix states;                    // d x N, normalized
  std::vector<double> labels;       // N, training units (see prepare_labels)
  std::vector<unsigned char> mask;  // N
};

struct TrainResult {
  OvaeModel model;
  std::vector<LossReport> history;
};

using EpochCallback = std::function<void(int epoch, const LossReport&)>;

inline TrainResult train(const TrainingSet& set, const data::NormStats& norm, const OvaeConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  const Eigen::Index n = set.states.cols();
  require(n > 0, ErrorKind::Domain, "train: empty dataset");
  require(set.labels.size() == std::size_t(n) && set.mask.size() == std::size_t(n), ErrorKind::Dimension,
          "train: labels/mask length must equal the number of states");
  require(set.states.allFinite(), ErrorKind::Numeric, "train: non-finite training data");

  OvaeModel model = OvaeModel::initialize(int(set.states.rows()), cfg, norm);
  if (cfg.orientation) {
    std::vector<double> labeled;
    for (Eigen::Index i = 0; i < n; ++i)
      if (set.mask[std::size_t(i)]) labeled.push_back(set.labels[std::size_t(i)]);
    require(!labeled.empty(), ErrorKind::Domain,
            "train: orientation is enabled but no row is labeled (labeled_fraction = 0)");
    model.feature_cdf = EmpiricalCdf(std::move(labeled));
  }

  auto params = nn::parameter_blocks(model.encoder, "encoder");
  for (auto& p : nn::parameter_blocks(model.decoder, "decoder")) params.push_back(std::move(p));
  params.push_back({"log_var_f", {&model.log_var_f, 1}});
  nn::AdamState adam = nn::make_adam(params, cfg.learning_rate);

  Rng rng = make_rng(cfg.seed, streams::kTrain);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index(0));

  TrainResult result;
  const auto bs = Eigen::Index(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossReport acc;
    acc.per_latent_kl.assign(std::size_t(cfg.latent_dim), 0.0);
    double labeled_rows = 0.0;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index b = std::min(bs, n - start);
      TrainBatch batch;
      batch.states.resize(set.states.rows(), b);
      batch.labels.resize(static_cast<std::size_t>(b));
      batch.mask.resize(static_cast<std::size_t>(b));
      std::size_t n_lab = 0;
      for (Eigen::Index k = 0; k < b; ++k) {
        const auto src = order[std::size_t(start + k)];
        batch.states.col(k) = set.states.col(src);
        batch.labels[std::size_t(k)] = set.labels[std::size_t(src)];
        batch.mask[std::size_t(k)] = set.mask[std::size_t(src)];
        n_lab += batch.mask[std::size_t(k)] ? 1 : 0;
      }
      Matrix eps(cfg.latent_dim, b);
      for (Eigen::Index c = 0; c < b; ++c)
        for (Eigen::Index r = 0; r < cfg.latent_dim; ++r) eps(r, c) = normal(rng);

      const BatchEvaluation ev = evaluate_batch(model, batch, eps, cfg.beta, cfg.orientation);
      require(std::isfinite(ev.loss.total), ErrorKind::Numeric,
              "train: loss became non-finite at epoch " + std::to_string(epoch + 1));

      auto grads = nn::gradient_blocks(ev.grad.encoder);
      for (auto g : nn::gradient_blocks(ev.grad.decoder)) grads.push_back(g);
      grads.emplace_back(&ev.grad.log_var_f, 1);
      nn::adam_step(params, grads, adam);
      model.encoder.touch();
      model.decoder.touch();

      acc.kl += ev.loss.kl * double(b);
      acc.reconstruction += ev.loss.reconstruction * double(b);
      acc.orientation += ev.loss.orientation * double(n_lab);
      labeled_rows += double(n_lab);
      for (std::size_t j = 0; j < acc.per_latent_kl.size(); ++j) acc.per_latent_kl[j] += ev.loss.per_latent_kl[j] * double(b);
    }
    acc.kl /= double(n);
    acc.reconstruction /= double(n);
    acc.orientation = labeled_rows > 0 ? acc.orientation / labeled_rows : 0.0;
    for (auto& v : acc.per_latent_kl) v /= double(n);
    acc.total = total_loss(acc.kl, acc.reconstruction, acc.orientation, cfg.beta);
    if (on_epoch) on_epoch(epoch + 1, acc);
    result.history.push_back(std::move(acc));
  }
  model.trained = true;
  result.model = std::move(model);
  return result;
}

// ---------------------------------------------------------------------------
// Generation

// Decodes z (L x B), adds output noise (d x B, standard normal), clamps to the
// training range and maps back to physical units.
inline Matrix generate(const OvaeModel& model, const Matrix& z, const Matrix& noise) {
  require(model.trained, ErrorKind::Domain, "generate: model has not been trained");
  require(z.rows() == model.latent_dim, ErrorKind::Dimension, "generate: z must have L rows");
  require(noise.rows() == model.data_dim && noise.cols() == z.cols(), ErrorKind::Dimension,
          "generate: noise must be d x B");
  const Gaussian out = decode(model, z);
  const Matrix scaled = (out.mu + noise.cwiseProduct(out.sigma())).cwiseMax(0.0).cwiseMin(1.0);
  return model.norm.denormalize(scaled);
}

inline Matrix standard_normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const OvaeModel& m) {
  return {{"format", "ovae.model"},
          {"version", kModelFormatVersion},
          {"latent_dim", m.latent_dim},
          {"data_dim", m.data_dim},
          {"encoder", nn::to_json(m.encoder)},
          {"decoder", nn::to_json(m.decoder)},
          {"norm_stats", data::to_json(m.norm)},
          {"feature_cdf", m.feature_cdf.sorted_values()},
          {"log_var_f", m.log_var_f},
          {"trained", m.trained},
          {"config", to_json(m.config)}};
}

inline OvaeModel model_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "ovae.model", ErrorKind::Io, "not an ovae.model bundle");
    require(j.at("version").get<int>() == kModelFormatVersion, ErrorKind::Io, "unsupported ovae.model version");
    OvaeModel m;
    m.latent_dim = j.at("latent_dim").get<int>();
    m.data_dim = j.at("data_dim").get<int>();
    m.encoder = nn::mlp_from_json(j.at("encoder"));
    m.decoder = nn::mlp_from_json(j.at("decoder"));
    m.norm = data::norm_stats_from_json(j.at("norm_stats"));
    auto cdf = j.at("feature_cdf").get<std::vector<double>>();
    if (!cdf.empty()) m.feature_cdf = EmpiricalCdf(std::move(cdf));
    m.log_var_f = j.at("log_var_f").get<double>();
    m.trained = j.at("trained").get<bool>();
    m.config = ovae_config_from_json(j.at("config"));
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed ovae.model bundle: ") + e.what());
  }
}

// CSV: epoch,kl,re,ori,total,kl_1..kl_L
inline void write_loss_history(std::ostream& out, const std::vector<LossReport>& history) {
  out << "epoch,kl,re,ori,total";
  const std::size_t L = history.empty() ? 0 : history.front().per_latent_kl.size();
  for (std::size_t j = 0; j < L; ++j) out << ",kl_" << j + 1;
  out << '\n';
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& r = history[e];
    out << e + 1 << ',' << data::format_double(r.kl) << ',' << data::format_double(r.reconstruction) << ','
        << data::format_double(r.orientation) << ',' << data::format_double(r.total);
    for (double v : r.per_latent_kl) out << ',' << data::format_double(v);
    out << '\n';
  }
}

}  // namespace ovae
