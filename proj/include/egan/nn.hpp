#pragma once

// Fully-connected network stacks over the tape engine: named parameter sets,
// an MLP builder covering the generator / discriminator / inference-net
// layouts, and bias-corrected Adam.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "egan/autodiff.hpp"
#include "egan/errors.hpp"
#include "egan/tensor.hpp"

namespace egan::nn {

/// Named parameters with matching gradient buffers. std::map keeps iteration
/// order deterministic for optimizers and serialization.
struct ParamSet {
  std::map<std::string, Param> params;

  Param& add(const std::string& name, Tensor value, bool trainable = true) {
    auto [it, fresh] = params.emplace(name, Param(std::move(value), trainable));
    if (!fresh) throw Error("ParamSet: duplicate parameter " + name);
    return it->second;
  }

  Param& at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("ParamSet: no parameter " + name);
    return it->second;
  }
  const Param& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw Error("ParamSet: no parameter " + name);
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, p] : params)
      std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
  }
};

enum class Layer : std::uint8_t { Fc, Relu, LeakyRelu, Tanh, Sigmoid, BatchNorm };

struct LayerSpec {
  Layer kind;
  std::size_t width = 0;   // Fc output width
  double slope = 0.01;     // LeakyRelu
};

/// Feed-forward stack. Parameters are created at construction with
/// uniform(-s, s), s = sqrt(6 / (fan_in + fan_out)); batchnorm gets
/// gamma = 1, beta = 0 and running stats (mean 0, var 1) stored as
/// non-trainable parameters so checkpoints capture them.
class Mlp {
 public:
  Mlp(std::size_t input_dim, std::vector<LayerSpec> layers, Rng& rng)
      : input_dim_(input_dim), layers_(std::move(layers)) {
    std::size_t width = input_dim_;
    std::size_t fc = 0, bn = 0;
    for (const auto& l : layers_) {
      if (l.kind == Layer::Fc) {
        const double s = std::sqrt(6.0 / static_cast<double>(width + l.width));
        params_.add(key("fc", fc, "w"), Tensor::uniform({width, l.width}, rng, -s, s));
        params_.add(key("fc", fc, "b"), Tensor::matrix(1, l.width, 0.0));
        width = l.width;
        ++fc;
      } else if (l.kind == Layer::BatchNorm) {
        params_.add(key("bn", bn, "gamma"), Tensor::matrix(1, width, 1.0));
        params_.add(key("bn", bn, "beta"), Tensor::matrix(1, width, 0.0));
        params_.add(key("bn", bn, "rmean"), Tensor::matrix(1, width, 0.0), false);
        params_.add(key("bn", bn, "rvar"), Tensor::matrix(1, width, 1.0), false);
        ++bn;
      }
    }
    output_dim_ = width;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Records the full forward pass on the tape; returns the output node.
  int forward(Tape& tape, int x, BnMode mode, bool update_running = true) {
    if (tape.value(x).cols() != input_dim_)
      throw ShapeMismatch("Mlp::forward: input width " +
                          std::to_string(tape.value(x).cols()) + ", expected " +
                          std::to_string(input_dim_));
    int cur = x;
    std::size_t fc = 0, bn = 0;
    for (const auto& l : layers_) {
      switch (l.kind) {
        case Layer::Fc: {
          const int w = tape.param(params_.at(key("fc", fc, "w")), key("fc", fc, "w"));
          const int b = tape.param(params_.at(key("fc", fc, "b")), key("fc", fc, "b"));
          cur = tape.fc(cur, w, b);
          ++fc;
          break;
        }
        case Layer::Relu: cur = tape.relu(cur); break;
        case Layer::LeakyRelu: cur = tape.leaky_relu(cur, l.slope); break;
        case Layer::Tanh: cur = tape.tanh(cur); break;
        case Layer::Sigmoid: cur = tape.sigmoid(cur); break;
        case Layer::BatchNorm: {
          const int g = tape.param(params_.at(key("bn", bn, "gamma")), key("bn", bn, "gamma"));
          const int be = tape.param(params_.at(key("bn", bn, "beta")), key("bn", bn, "beta"));
          cur = tape.batchnorm(cur, g, be, mode, params_.at(key("bn", bn, "rmean")),
                               params_.at(key("bn", bn, "rvar")), 1e-5, 0.9, update_running);
          ++bn;
          break;
        }
      }
    }
    return cur;
  }

  /// Tape-free evaluation; same code path as forward, so results are
  /// bit-identical. Pure (and concurrently callable) unless Train mode is
  /// asked to update running statistics.
  Tensor forward_nograd(const Tensor& x, BnMode mode, bool update_running = false) {
    Tape tape;
    const int out = forward(tape, tape.leaf(x), mode, update_running);
    return tape.value(out);
  }

 private:
  static std::string key(const char* stem, std::size_t i, const char* leaf) {
    return std::string(stem) + std::to_string(i) + "." + leaf;
  }

  std::size_t input_dim_ = 0;
  std::size_t output_dim_ = 0;
  std::vector<LayerSpec> layers_;
  ParamSet params_;
};

inline LayerSpec fc(std::size_t width) { return {Layer::Fc, width}; }
inline LayerSpec relu() { return {Layer::Relu}; }
inline LayerSpec leaky_relu(double slope) { return {Layer::LeakyRelu, 0, slope}; }
inline LayerSpec batchnorm() { return {Layer::BatchNorm}; }

/// Generator z -> x for the 2D experiments.
inline Mlp make_generator(std::size_t z_dim, Rng& rng, std::size_t hidden = 128,
                          std::size_t out = 2) {
  return Mlp(z_dim,
             {fc(hidden), batchnorm(), relu(), fc(hidden), batchnorm(), relu(), fc(out)},
             rng);
}

/// Scalar-output discriminator; the output is an unbounded cost/energy (no
/// terminal sigmoid; the GAN baseline treats it as a logit).
inline Mlp make_discriminator(Rng& rng, std::size_t in = 2, std::size_t hidden = 128) {
  return Mlp(in, {fc(hidden), relu(), fc(hidden), relu(), fc(1)}, rng);
}

/// Inference net x -> (mean, log-std) of q(z|x); first z_dim outputs are the
/// mean, the rest the log-std.
inline Mlp make_inference_net(std::size_t z_dim, Rng& rng, std::size_t in = 2,
                              std::size_t hidden = 128) {
  return Mlp(in, {fc(hidden), relu(), fc(hidden), relu(), fc(2 * z_dim)}, rng);
}

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a ParamSet. step() consumes and zeroes the
/// gradient buffers of trainable parameters.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }

  void step(ParamSet& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : ps.params) {
      if (!p.trainable) continue;
      auto& [m, v] = moments(name, p);
      for (std::size_t i = 0; i < p.value.numel(); ++i) {
        const double g = p.grad.data[i];
        m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * g;
        v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m.data[i] / bc1;
        const double vhat = v.data[i] / bc2;
        p.value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        p.grad.data[i] = 0.0;
      }
    }
  }

 private:
  std::pair<Tensor, Tensor>& moments(const std::string& name, const Param& p) {
    auto it = m_.find(name);
    if (it == m_.end())
      it = m_.emplace(name, std::make_pair(Tensor::zeros_like(p.value),
                                           Tensor::zeros_like(p.value)))
               .first;
    return it->second;
  }

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, std::pair<Tensor, Tensor>> m_;
};

}  // namespace egan::nn
