#pragma once

// Reverse-mode differentiation on a linear tape. The op set is exactly what
// the fully-connected training stacks need: affine layers, pointwise
// nonlinearities, batch normalization, elementwise arithmetic, and scalar
// reductions. Creation order is topological order, so the backward pass is a
// single reverse sweep.

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "egan/errors.hpp"
#include "egan/tensor.hpp"

namespace egan {

struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  explicit Param(Tensor v, bool train = true)
      : value(std::move(v)), grad(Tensor::zeros_like(value)), trainable(train) {}
  Param() = default;
};

enum class Op : std::uint8_t {
  Leaf,
  Fc,         // in: x, w, b
  Relu,
  LeakyRelu,  // s0 = slope
  Tanh,
  Sigmoid,
  Softplus,
  BatchNorm,  // in: x, gamma, beta; aux0 = xhat, aux1 = per-feature scale
  Add,
  Sub,
  Mul,
  Neg,
  Exp,
  Log,
  Square,
  Scale,      // s0 = factor
  AddScalar,  // s0 = addend
  SumAll,
  MeanAll,
  SliceCols,  // i0 = first column, i1 = one past last
};

struct Node {
  Op op = Op::Leaf;
  std::array<int, 3> in{-1, -1, -1};
  Tensor value;
  Tensor grad;  // persistent; accumulated across backward passes
  double s0 = 0.0;
  int i0 = 0, i1 = 0;
  Tensor aux0, aux1;
  Param* bound = nullptr;      // set for parameter leaves
  std::string bound_name;
};

struct BackwardReport {
  /// Parameter leaves not reached from the loss or any extra seed; their
  /// gradients are left untouched.
  std::vector<std::string> disconnected;
};

/// Extra gradient seed injected at a node before the reverse sweep, used for
/// terms whose gradient is known analytically rather than traced (the
/// nearest-neighbor entropy direction enters training this way).
struct GradSeed {
  int node = -1;
  Tensor grad;
};

namespace detail {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using MapC = Eigen::Map<const EMat>;

inline MapC emap(const Tensor& t) {
  return MapC(t.data.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}
inline MapM emap(Tensor& t) {
  return MapM(t.data.data(), static_cast<Eigen::Index>(t.rows()),
              static_cast<Eigen::Index>(t.cols()));
}

inline double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}
inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

enum class BnMode : std::uint8_t { Train, Eval };

class Tape {
 public:
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor& value(int id) const { return node(id).value; }
  const Tensor& grad(int id) const { return node(id).grad; }
  std::size_t size() const { return nodes_.size(); }

  int leaf(Tensor v) {
    Node n;
    n.value = std::move(v);
    return push(std::move(n));
  }

  /// Parameter leaf: backward adds this node's gradient into p.grad.
  int param(Param& p, std::string name) {
    Node n;
    n.value = p.value;
    n.bound = &p;
    n.bound_name = std::move(name);
    return push(std::move(n));
  }

  int fc(int x, int w, int b) {
    const Tensor &xv = val(x), &wv = val(w), &bv = val(b);
    if (xv.cols() != wv.rows() || wv.cols() != bv.numel())
      throw ShapeMismatch("fc: input " + dims(xv) + ", weights " + dims(wv) +
                          ", bias " + dims(bv));
    Node n;
    n.op = Op::Fc;
    n.in = {x, w, b};
    n.value = Tensor::matrix(xv.rows(), wv.cols());
    detail::emap(n.value).noalias() = detail::emap(xv) * detail::emap(wv);
    detail::emap(n.value).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXd>(bv.data.data(),
                                             static_cast<Eigen::Index>(bv.numel()));
    return push(std::move(n));
  }

  int relu(int x) { return pointwise(Op::Relu, x, 0.0); }
  int leaky_relu(int x, double slope) { return pointwise(Op::LeakyRelu, x, slope); }
  int tanh(int x) { return pointwise(Op::Tanh, x, 0.0); }
  int sigmoid(int x) { return pointwise(Op::Sigmoid, x, 0.0); }
  int softplus(int x) { return pointwise(Op::Softplus, x, 0.0); }
  int neg(int x) { return pointwise(Op::Neg, x, 0.0); }
  int exp(int x) { return pointwise(Op::Exp, x, 0.0); }
  int log(int x) { return pointwise(Op::Log, x, 0.0); }
  int square(int x) { return pointwise(Op::Square, x, 0.0); }
  int scale(int x, double a) { return pointwise(Op::Scale, x, a); }
  int add_scalar(int x, double a) { return pointwise(Op::AddScalar, x, a); }

  int add(int a, int b) { return binary(Op::Add, a, b); }
  int sub(int a, int b) { return binary(Op::Sub, a, b); }
  int mul(int a, int b) { return binary(Op::Mul, a, b); }

  int sum_all(int x) { return reduce(Op::SumAll, x); }
  int mean_all(int x) { return reduce(Op::MeanAll, x); }

  int slice_cols(int x, int c0, int c1) {
    const Tensor& xv = val(x);
    if (c0 < 0 || c1 <= c0 || static_cast<std::size_t>(c1) > xv.cols())
      throw ShapeMismatch("slice_cols: bad range");
    Node n;
    n.op = Op::SliceCols;
    n.in = {x, -1, -1};
    n.i0 = c0;
    n.i1 = c1;
    n.value = Tensor::matrix(xv.rows(), static_cast<std::size_t>(c1 - c0));
    for (std::size_t r = 0; r < xv.rows(); ++r)
      for (int c = c0; c < c1; ++c)
        n.value.at(r, static_cast<std::size_t>(c - c0)) = xv.at(r, static_cast<std::size_t>(c));
    return push(std::move(n));
  }

  /// Batch normalization over the batch dimension. Train mode normalizes by
  /// the biased batch statistics and folds them into the running estimates
  /// (momentum 0.9, unbiased variance, matching common framework practice);
  /// Eval mode normalizes by the running estimates.
  int batchnorm(int x, int gamma, int beta, BnMode mode, Param& running_mean,
                Param& running_var, double eps = 1e-5, double momentum = 0.9,
                bool update_running = true) {
    const Tensor& xv = val(x);
    const std::size_t B = xv.rows(), F = xv.cols();
    if (val(gamma).numel() != F || val(beta).numel() != F ||
        running_mean.value.numel() != F || running_var.value.numel() != F)
      throw ShapeMismatch("batchnorm: parameter width mismatch");
    if (mode == BnMode::Train && B < 2)
      throw DegenerateBatch("batchnorm: train mode needs batch >= 2");

    Node n;
    n.op = Op::BatchNorm;
    n.in = {x, gamma, beta};
    n.value = Tensor::matrix(B, F);
    n.aux0 = Tensor::matrix(B, F);      // xhat
    n.aux1 = Tensor::matrix(1, F);      // 1/sqrt(var + eps) used in forward
    const Tensor& g = val(gamma);
    const Tensor& bta = val(beta);

    for (std::size_t f = 0; f < F; ++f) {
      double mean, var;
      if (mode == BnMode::Train) {
        mean = 0.0;
        for (std::size_t r = 0; r < B; ++r) mean += xv.at(r, f);
        mean /= static_cast<double>(B);
        var = 0.0;
        for (std::size_t r = 0; r < B; ++r) {
          const double d = xv.at(r, f) - mean;
          var += d * d;
        }
        var /= static_cast<double>(B);  // biased, used for normalization
        if (update_running) {
          const double unbiased = var * static_cast<double>(B) / static_cast<double>(B - 1);
          running_mean.value.data[f] = momentum * running_mean.value.data[f] + (1.0 - momentum) * mean;
          running_var.value.data[f] = momentum * running_var.value.data[f] + (1.0 - momentum) * unbiased;
        }
      } else {
        mean = running_mean.value.data[f];
        var = running_var.value.data[f];
      }
      const double inv_std = 1.0 / std::sqrt(var + eps);
      n.aux1.data[f] = inv_std;
      for (std::size_t r = 0; r < B; ++r) {
        const double xhat = (xv.at(r, f) - mean) * inv_std;
        n.aux0.at(r, f) = xhat;
        n.value.at(r, f) = g.data[f] * xhat + bta.data[f];
      }
    }
    n.s0 = mode == BnMode::Train ? 1.0 : 0.0;
    return push(std::move(n));
  }

  /// Reverse sweep from a scalar loss node, plus optional extra seeds.
  /// Gradients accumulate into node.grad and into bound parameter buffers;
  /// a second pass without clearing doubles them.
  BackwardReport backward(int loss, const std::vector<GradSeed>& seeds = {}) {
    if (val(loss).numel() != 1) throw Error("backward: loss node must be scalar");
    const std::size_t N = nodes_.size();
    std::vector<Tensor> scratch(N);
    std::vector<char> touched(N, 0);

    auto seed_at = [&](int id, const Tensor& g) {
      auto& s = scratch[static_cast<std::size_t>(id)];
      if (s.numel() == 0) s = Tensor::zeros_like(nodes_[static_cast<std::size_t>(id)].value);
      detail::require_shape(s, g, "backward seed");
      for (std::size_t i = 0; i < s.numel(); ++i) s.data[i] += g.data[i];
      touched[static_cast<std::size_t>(id)] = 1;
    };

    {
      Tensor one = Tensor::zeros_like(val(loss));
      one.data[0] = 1.0;
      seed_at(loss, one);
    }
    for (const auto& s : seeds) seed_at(s.node, s.grad);

    for (std::size_t idx = N; idx-- > 0;) {
      if (!touched[idx]) continue;
      propagate(static_cast<int>(idx), scratch, touched);
    }

    BackwardReport rep;
    for (std::size_t idx = 0; idx < N; ++idx) {
      Node& n = nodes_[idx];
      if (touched[idx]) {
        if (n.grad.numel() == 0) n.grad = Tensor::zeros_like(n.value);
        for (std::size_t i = 0; i < n.grad.numel(); ++i) n.grad.data[i] += scratch[idx].data[i];
        if (n.bound != nullptr)
          for (std::size_t i = 0; i < n.grad.numel(); ++i)
            n.bound->grad.data[i] += scratch[idx].data[i];
      } else if (n.bound != nullptr) {
        rep.disconnected.push_back(n.bound_name);
      }
    }
    return rep;
  }

 private:
  std::vector<Node> nodes_;

  const Tensor& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  static std::string dims(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  int pointwise(Op op, int x, double s0) {
    const Tensor& xv = val(x);
    Node n;
    n.op = op;
    n.in = {x, -1, -1};
    n.s0 = s0;
    n.value = Tensor::zeros_like(xv);
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      const double v = xv.data[i];
      switch (op) {
        case Op::Relu: n.value.data[i] = v > 0.0 ? v : 0.0; break;
        case Op::LeakyRelu: n.value.data[i] = v > 0.0 ? v : s0 * v; break;
        case Op::Tanh: n.value.data[i] = std::tanh(v); break;
        case Op::Sigmoid: n.value.data[i] = detail::stable_sigmoid(v); break;
        case Op::Softplus: n.value.data[i] = detail::stable_softplus(v); break;
        case Op::Neg: n.value.data[i] = -v; break;
        case Op::Exp: n.value.data[i] = std::exp(v); break;
        case Op::Log: n.value.data[i] = std::log(v); break;
        case Op::Square: n.value.data[i] = v * v; break;
        case Op::Scale: n.value.data[i] = s0 * v; break;
        case Op::AddScalar: n.value.data[i] = v + s0; break;
        default: throw Error("pointwise: bad op");
      }
    }
    return push(std::move(n));
  }

  int binary(Op op, int a, int b) {
    const Tensor &av = val(a), &bv = val(b);
    detail::require_shape(av, bv, "binary op");
    Node n;
    n.op = op;
    n.in = {a, b, -1};
    n.value = Tensor::zeros_like(av);
    for (std::size_t i = 0; i < av.numel(); ++i) {
      switch (op) {
        case Op::Add: n.value.data[i] = av.data[i] + bv.data[i]; break;
        case Op::Sub: n.value.data[i] = av.data[i] - bv.data[i]; break;
        case Op::Mul: n.value.data[i] = av.data[i] * bv.data[i]; break;
        default: throw Error("binary: bad op");
      }
    }
    return push(std::move(n));
  }

  int reduce(Op op, int x) {
    const Tensor& xv = val(x);
    Node n;
    n.op = op;
    n.in = {x, -1, -1};
    n.value = Tensor::matrix(1, 1);
    double s = 0.0;
    for (double v : xv.data) s += v;
    n.value.data[0] = op == Op::SumAll ? s : s / static_cast<double>(xv.numel());
    return push(std::move(n));
  }

  void propagate(int id, std::vector<Tensor>& scratch, std::vector<char>& touched) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.op == Op::Leaf) return;
    const Tensor& gy = scratch[static_cast<std::size_t>(id)];

    auto acc = [&](int input) -> Tensor& {
      auto& s = scratch[static_cast<std::size_t>(input)];
      if (s.numel() == 0) s = Tensor::zeros_like(val(input));
      touched[static_cast<std::size_t>(input)] = 1;
      return s;
    };

    switch (n.op) {
      case Op::Fc: {
        const Tensor& xv = val(n.in[0]);
        const Tensor& wv = val(n.in[1]);
        Tensor& gx = acc(n.in[0]);
        Tensor& gw = acc(n.in[1]);
        Tensor& gb = acc(n.in[2]);
        detail::emap(gx).noalias() += detail::emap(gy) * detail::emap(wv).transpose();
        detail::emap(gw).noalias() += detail::emap(xv).transpose() * detail::emap(gy);
        Eigen::Map<Eigen::RowVectorXd>(gb.data.data(), static_cast<Eigen::Index>(gb.numel())) +=
            detail::emap(gy).colwise().sum();
        break;
      }
      case Op::Relu: {
        const Tensor& xv = val(n.in[0]);
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          if (xv.data[i] > 0.0) gx.data[i] += gy.data[i];
        break;
      }
      case Op::LeakyRelu: {
        const Tensor& xv = val(n.in[0]);
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * (xv.data[i] > 0.0 ? 1.0 : n.s0);
        break;
      }
      case Op::Tanh: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * (1.0 - n.value.data[i] * n.value.data[i]);
        break;
      }
      case Op::Sigmoid: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * n.value.data[i] * (1.0 - n.value.data[i]);
        break;
      }
      case Op::Softplus: {
        const Tensor& xv = val(n.in[0]);
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * detail::stable_sigmoid(xv.data[i]);
        break;
      }
      case Op::BatchNorm: {
        const bool train = n.s0 != 0.0;
        const Tensor& g = val(n.in[1]);
        Tensor& gx = acc(n.in[0]);
        Tensor& gg = acc(n.in[1]);
        Tensor& gb = acc(n.in[2]);
        const std::size_t B = n.value.rows(), F = n.value.cols();
        for (std::size_t f = 0; f < F; ++f) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t r = 0; r < B; ++r) {
            const double dy = gy.at(r, f);
            sum_dy += dy;
            sum_dy_xhat += dy * n.aux0.at(r, f);
          }
          gg.data[f] += sum_dy_xhat;
          gb.data[f] += sum_dy;
          const double scale = g.data[f] * n.aux1.data[f];
          if (train) {
            const double mean_dy = sum_dy / static_cast<double>(B);
            const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(B);
            for (std::size_t r = 0; r < B; ++r)
              gx.at(r, f) += scale * (gy.at(r, f) - mean_dy - n.aux0.at(r, f) * mean_dy_xhat);
          } else {
            for (std::size_t r = 0; r < B; ++r) gx.at(r, f) += scale * gy.at(r, f);
          }
        }
        break;
      }
      case Op::Add: {
        Tensor& ga = acc(n.in[0]);
        Tensor& gb = acc(n.in[1]);
        for (std::size_t i = 0; i < ga.numel(); ++i) {
          ga.data[i] += gy.data[i];
          gb.data[i] += gy.data[i];
        }
        break;
      }
      case Op::Sub: {
        Tensor& ga = acc(n.in[0]);
        Tensor& gb = acc(n.in[1]);
        for (std::size_t i = 0; i < ga.numel(); ++i) {
          ga.data[i] += gy.data[i];
          gb.data[i] -= gy.data[i];
        }
        break;
      }
      case Op::Mul: {
        const Tensor& av = val(n.in[0]);
        const Tensor& bv = val(n.in[1]);
        Tensor& ga = acc(n.in[0]);
        Tensor& gb = acc(n.in[1]);
        for (std::size_t i = 0; i < ga.numel(); ++i) {
          ga.data[i] += gy.data[i] * bv.data[i];
          gb.data[i] += gy.data[i] * av.data[i];
        }
        break;
      }
      case Op::Neg: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] -= gy.data[i];
        break;
      }
      case Op::Exp: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * n.value.data[i];
        break;
      }
      case Op::Log: {
        const Tensor& xv = val(n.in[0]);
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] / xv.data[i];
        break;
      }
      case Op::Square: {
        const Tensor& xv = val(n.in[0]);
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i)
          gx.data[i] += gy.data[i] * 2.0 * xv.data[i];
        break;
      }
      case Op::Scale: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[i] * n.s0;
        break;
      }
      case Op::AddScalar: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[i];
        break;
      }
      case Op::SumAll: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[0];
        break;
      }
      case Op::MeanAll: {
        Tensor& gx = acc(n.in[0]);
        const double inv = 1.0 / static_cast<double>(gx.numel());
        for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[0] * inv;
        break;
      }
      case Op::SliceCols: {
        Tensor& gx = acc(n.in[0]);
        for (std::size_t r = 0; r < n.value.rows(); ++r)
          for (int c = n.i0; c < n.i1; ++c)
            gx.at(r, static_cast<std::size_t>(c)) += gy.at(r, static_cast<std::size_t>(c - n.i0));
        break;
      }
      case Op::Leaf:
        break;
    }
  }
};

}  // namespace egan
