#pragma once

// Small dense multilayer perceptron with hand-written backpropagation and Adam.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "deload/error.hpp"

namespace deload::nn {

/// Fully connected layer y = W x + b, W stored row-major (out x in).
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  Dense() = default;
  Dense(std::size_t in_dim, std::size_t out_dim) : in(in_dim), out(out_dim), weights(in_dim * out_dim), bias(out_dim) {}

  [[nodiscard]] double w(std::size_t r, std::size_t c) const { return weights[r * in + c]; }
  [[nodiscard]] std::size_t param_count() const { return weights.size() + bias.size(); }

  void apply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t r = 0; r < out; ++r) {
      double acc = bias[r];
      const double* row = weights.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
      y[r] = acc;
    }
  }
};

// NaN passes through so a corrupted network is detected downstream.
inline double relu(double x) { return x < 0.0 ? 0.0 : x; }
inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Activations kept from a forward pass for backpropagation.
struct ForwardCache {
  std::vector<std::vector<double>> inputs;  // input to each layer (post-activation of previous)
  std::vector<double> output;               // linear output of the last layer
};

/// ReLU hidden layers, linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t input, std::vector<std::size_t> hidden, std::size_t output) {
    std::size_t prev = input;
    for (auto h : hidden) {
      layers_.emplace_back(prev, h);
      prev = h;
    }
    layers_.emplace_back(prev, output);
  }

  [[nodiscard]] std::size_t input_dim() const { return layers_.front().in; }
  [[nodiscard]] std::size_t output_dim() const { return layers_.back().out; }
  [[nodiscard]] const std::vector<Dense>& layers() const { return layers_; }
  std::vector<Dense>& layers() { return layers_; }

  [[nodiscard]] std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
  }

  /// He-uniform hidden weights, output layer scaled by `output_gain`, zero biases.
  template <class Rng>
  void init(Rng& rng, double output_gain = 0.01) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& l = layers_[i];
      const double limit = std::sqrt(6.0 / static_cast<double>(l.in)) * (i + 1 == layers_.size() ? output_gain : 1.0);
      for (auto& x : l.weights) x = limit * (2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0);
      for (auto& x : l.bias) x = 0.0;
    }
  }

  [[nodiscard]] std::vector<double> forward(std::span<const double> x, ForwardCache* cache = nullptr) const {
    if (x.size() != input_dim()) throw RuntimeFault("mlp: input dimension mismatch");
    std::vector<double> cur(x.begin(), x.end());
    if (cache) cache->inputs.clear();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (cache) cache->inputs.push_back(cur);
      std::vector<double> next(layers_[i].out);
      layers_[i].apply(cur, next);
      if (i + 1 < layers_.size())
        for (auto& v : next) v = relu(v);
      cur = std::move(next);
    }
    if (cache) cache->output = cur;
    return cur;
  }

  /// Accumulates d(loss)/d(params) into `grad` (flat, layer order: weights then bias)
  /// given d(loss)/d(output) for the pass recorded in `cache`.
  void backward(const ForwardCache& cache, std::span<const double> grad_out, std::span<double> grad) const {
    std::vector<std::size_t> offsets(layers_.size());
    std::size_t off = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) offsets[i] = off, off += layers_[i].param_count();
    if (grad.size() != off) throw RuntimeFault("mlp: gradient buffer size mismatch");

    std::vector<double> delta(grad_out.begin(), grad_out.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
      const auto& l = layers_[li];
      const auto& x = cache.inputs[li];
      double* gw = grad.data() + offsets[li];
      double* gb = gw + l.weights.size();
      for (std::size_t r = 0; r < l.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        gb[r] += d;
        double* row = gw + r * l.in;
        for (std::size_t c = 0; c < l.in; ++c) row[c] += d * x[c];
      }
      if (li == 0) break;
      // Propagate through W and the ReLU that produced x.
      std::vector<double> prev(l.in, 0.0);
      for (std::size_t r = 0; r < l.out; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* row = l.weights.data() + r * l.in;
        for (std::size_t c = 0; c < l.in; ++c) prev[c] += row[c] * d;
      }
      for (std::size_t c = 0; c < l.in; ++c)
        if (!(x[c] > 0.0)) prev[c] = 0.0;
      delta = std::move(prev);
    }
  }

  [[nodiscard]] std::vector<double> flat_params() const {
    std::vector<double> p;
    p.reserve(param_count());
    for (const auto& l : layers_) {
      p.insert(p.end(), l.weights.begin(), l.weights.end());
      p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    return p;
  }

  void set_flat_params(std::span<const double> p) {
    if (p.size() != param_count()) throw RuntimeFault("mlp: parameter vector size mismatch");
    std::size_t k = 0;
    for (auto& l : layers_) {
      for (auto& v : l.weights) v = p[k++];
      for (auto& v : l.bias) v = p[k++];
    }
  }

  [[nodiscard]] bool finite() const {
    for (const auto& l : layers_) {
      for (double v : l.weights)
        if (!std::isfinite(v)) return false;
      for (double v : l.bias)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.layers_.size() != b.layers_.size()) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      const auto& x = a.layers_[i];
      const auto& y = b.layers_[i];
      if (x.in != y.in || x.out != y.out || x.weights != y.weights || x.bias != y.bias) return false;
    }
    return true;
  }

 private:
  std::vector<Dense> layers_;
};

struct AdamConfig {
  double lr = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw RuntimeFault("adam: size mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      params[i] -= cfg_.lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
    }
  }

  [[nodiscard]] long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace deload::nn
