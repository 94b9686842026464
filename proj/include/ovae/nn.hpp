#pragma once

// Dense feed-forward networks with manual reverse-mode gradients and Adam.
//
// Batches are stored column-per-sample: a batch of B inputs of size n is an
// n x B matrix. Single vectors are the B = 1 special case.

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovae/error.hpp"
#include "ovae/rng.hpp"

namespace ovae::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU, Identity };

inline const char* to_string(Activation a) {
  return a == Activation::ReLU ? "relu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::ReLU;
  if (s == "identity") return Activation::Identity;
  fail(ErrorKind::Io, "unknown activation tag '" + s + "'");
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

// Activations recorded by forward(). `inputs[l]` is the input of layer l and
// `pre[l]` its pre-activation; the tag ties the cache to one parameter state.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
  std::uint64_t tag = 0;
};

struct MlpGradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
  Matrix input;  // dLoss/dInput, in x B
};

class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    validate();
  }

  // Layer sizes {in, h1, ..., out}; hidden layers use `hidden`, the final
  // layer is Identity. Hidden weights are He-normal, the head uses normals
  // scaled by head_scale / sqrt(fan_in). Biases start at zero.
  static Mlp make(std::span<const int> sizes, Activation hidden, Rng& rng,
                  double head_scale = 0.1) {
    require(sizes.size() >= 2, ErrorKind::Domain, "Mlp needs at least input and output sizes");
    std::vector<DenseLayer> layers;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
      require(sizes[l] > 0 && sizes[l + 1] > 0, ErrorKind::Domain, "layer sizes must be positive");
      const bool head = l + 2 == sizes.size();
      DenseLayer layer;
      layer.activation = head ? Activation::Identity : hidden;
      const double scale = head ? head_scale / std::sqrt(double(sizes[l]))
                                : std::sqrt(2.0 / double(sizes[l]));
      layer.weights.resize(sizes[l + 1], sizes[l]);
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
          layer.weights(i, j) = scale * normal(rng);
      layer.bias = Vector::Zero(sizes[l + 1]);
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
  }

  Eigen::Index input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  Eigen::Index output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }

  // Mutable access invalidates outstanding caches.
  std::vector<DenseLayer>& mutable_layers() {
    touch();
    return layers_;
  }

  std::uint64_t tag() const { return tag_; }
  void touch() { tag_ = next_tag(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  void validate() const {
    require(!layers_.empty(), ErrorKind::Domain, "Mlp has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      require(layer.bias.size() == layer.out_dim(), ErrorKind::Dimension,
              "layer " + std::to_string(l) + ": bias length != output size");
      if (l > 0)
        require(layers_[l - 1].out_dim() == layer.in_dim(), ErrorKind::Dimension,
                "layer " + std::to_string(l) + ": input size does not chain");
    }
  }

 private:
  static std::uint64_t next_tag() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  std::vector<DenseLayer> layers_;
  std::uint64_t tag_ = next_tag();
};

namespace detail {

inline void apply_activation(Activation a, Matrix& m) {
  if (a == Activation::ReLU) m = m.cwiseMax(0.0);
}

}  // namespace detail

inline Matrix forward(const Mlp& mlp, const Matrix& input, ForwardCache* cache = nullptr) {
  require(!mlp.empty(), ErrorKind::Domain, "forward: empty network");
  require(input.rows() == mlp.input_dim(), ErrorKind::Dimension,
          "forward: input has " + std::to_string(input.rows()) + " rows, network expects " +
              std::to_string(mlp.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->tag = mlp.tag();
  }
  Matrix x = input;
  for (const auto& layer : mlp.layers()) {
    Matrix pre = layer.weights * x;
    pre.colwise() += layer.bias;
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->pre.push_back(pre);
    }
    detail::apply_activation(layer.activation, pre);
    x = std::move(pre);
  }
  return x;
}

inline Vector forward(const Mlp& mlp, const Vector& input) {
  return forward(mlp, Matrix(input)).col(0);
}

// Gradients of a scalar loss given dLoss/dOutput for the cached batch.
inline MlpGradients backward(const Mlp& mlp, const ForwardCache& cache, const Matrix& output_gradient) {
  require(cache.tag == mlp.tag() && cache.pre.size() == mlp.depth(), ErrorKind::Domain,
          "backward: cache does not belong to the current network parameters");
  require(output_gradient.rows() == mlp.output_dim() &&
              output_gradient.cols() == cache.pre.back().cols(),
          ErrorKind::Dimension, "backward: output gradient shape mismatch");
  const std::size_t depth = mlp.depth();
  MlpGradients g;
  g.weights.resize(depth);
  g.bias.resize(depth);
  Matrix upstream = output_gradient;
  for (std::size_t k = depth; k-- > 0;) {
    const auto& layer = mlp.layers()[k];
    if (layer.activation == Activation::ReLU)
      upstream = (cache.pre[k].array() > 0.0).select(upstream, 0.0);
    g.weights[k] = upstream * cache.inputs[k].transpose();
    g.bias[k] = upstream.rowwise().sum();
    upstream = layer.weights.transpose() * upstream;
  }
  g.input = std::move(upstream);
  return g;
}

// ---------------------------------------------------------------------------
// Adam

struct ParamBlock {
  std::string name;
  std::span<double> values;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline AdamState make_adam(std::span<const ParamBlock> params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.values.size(), 0.0);
    s.second_moment.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

// In-place bias-corrected Adam update. Nothing is modified when any gradient
// is non-finite.
inline void adam_step(std::span<const ParamBlock> params,
                      std::span<const std::span<const double>> grads, AdamState& state) {
  require(params.size() == grads.size() && params.size() == state.first_moment.size(),
          ErrorKind::Dimension, "adam_step: parameter/gradient/state block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    require(params[b].values.size() == grads[b].size() &&
                params[b].values.size() == state.first_moment[b].size() &&
                params[b].values.size() == state.second_moment[b].size(),
            ErrorKind::Dimension, "adam_step: shape mismatch in block '" + params[b].name + "'");
    for (double g : grads[b])
      require(std::isfinite(g), ErrorKind::Numeric,
              "adam_step: non-finite gradient in block '" + params[b].name + "'");
  }
  ++state.step_count;
  const double t = double(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.first_moment[b];
    auto& v = state.second_moment[b];
    auto values = params[b].values;
    const auto g = grads[b];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

// Parameter blocks of a network in a fixed order: W0, b0, W1, b1, ...
inline std::vector<ParamBlock> parameter_blocks(Mlp& mlp, const std::string& prefix) {
  std::vector<ParamBlock> blocks;
  auto& layers = mlp.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& w = layers[l].weights;
    auto& b = layers[l].bias;
    blocks.push_back({prefix + ".W" + std::to_string(l), {w.data(), std::size_t(w.size())}});
    blocks.push_back({prefix + ".b" + std::to_string(l), {b.data(), std::size_t(b.size())}});
  }
  return blocks;
}

inline std::vector<std::span<const double>> gradient_blocks(const MlpGradients& g) {
  std::vector<std::span<const double>> blocks;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    blocks.emplace_back(g.weights[l].data(), std::size_t(g.weights[l].size()));
    blocks.emplace_back(g.bias[l].data(), std::size_t(g.bias[l].size()));
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// Serialization: {"format": "ovae.mlp", "version": 1, "layers": [...]}, with
// weights stored row-major. Doubles are written with round-trip precision.

inline constexpr int kMlpFormatVersion = 1;

inline nlohmann::json to_json(const Mlp& mlp) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : mlp.layers()) {
    std::vector<double> w;
    w.reserve(std::size_t(layer.weights.size()));
    for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weights.cols(); ++j) w.push_back(layer.weights(i, j));
    layers.push_back({{"in", layer.in_dim()},
                      {"out", layer.out_dim()},
                      {"activation", to_string(layer.activation)},
                      {"weights", std::move(w)},
                      {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
  }
  return {{"format", "ovae.mlp"}, {"version", kMlpFormatVersion}, {"layers", std::move(layers)}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format").get<std::string>() == "ovae.mlp", ErrorKind::Io, "not an ovae.mlp blob");
    const int version = j.at("version").get<int>();
    require(version == kMlpFormatVersion, ErrorKind::Io,
            "unsupported ovae.mlp version " + std::to_string(version));
    std::vector<DenseLayer> layers;
    for (const auto& jl : j.at("layers")) {
      const auto in = jl.at("in").get<Eigen::Index>();
      const auto out = jl.at("out").get<Eigen::Index>();
      const auto w = jl.at("weights").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      require(in > 0 && out > 0 && w.size() == std::size_t(in * out) && b.size() == std::size_t(out),
              ErrorKind::Io, "ovae.mlp layer arrays do not match declared dims");
      DenseLayer layer;
      layer.activation = activation_from_string(jl.at("activation").get<std::string>());
      layer.weights.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = w[std::size_t(r * in + c)];
      layer.bias = Eigen::Map<const Vector>(b.data(), out);
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Io, std::string("malformed ovae.mlp blob: ") + e.what());
  }
}

}  // namespace ovae::nn
