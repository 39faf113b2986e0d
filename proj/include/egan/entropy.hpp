#pragma once

// Generator-entropy approximations: the nearest-neighbor entropy-gradient
// estimator (per-sample unit directions toward each point's neighborhood
// mean) and the variational conditional-entropy upper bound through an
// inference network.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "egan/autodiff.hpp"
#include "egan/errors.hpp"
#include "egan/nn.hpp"
#include "egan/tensor.hpp"

namespace egan::entropy {

/// Per-sample unit directions d_i = (mu_i - x_i)/|mu_i - x_i| with the global
/// scale alpha. alpha * d_i is the injected gradient of the negative-entropy
/// term with respect to sample i; degenerate rows (x_i at its neighborhood
/// mean) carry a zero direction and a flag.
struct EntropyGradBatch {
  Tensor directions;            // batch x dim, unit or zero rows
  std::vector<bool> degenerate;
  double alpha = 1.0;
  std::size_t k = 1;

  std::size_t size() const { return directions.rows(); }
};

namespace detail {

/// Indices of the k nearest neighbors of row i (self excluded), distance
/// ties broken toward the lower index.
inline std::vector<std::size_t> knn_indices(const Tensor& batch, std::size_t i,
                                            std::size_t k) {
  const std::size_t B = batch.rows(), D = batch.cols();
  if (k < 1 || k >= B)
    throw KTooLarge("knn: need 1 <= k < batch size, got k=" + std::to_string(k) +
                    " batch=" + std::to_string(B));
  std::vector<std::pair<double, std::size_t>> by_dist;
  by_dist.reserve(B - 1);
  for (std::size_t j = 0; j < B; ++j) {
    if (j == i) continue;
    double d2 = 0.0;
    for (std::size_t c = 0; c < D; ++c) {
      const double d = batch.at(j, c) - batch.at(i, c);
      d2 += d * d;
    }
    by_dist.emplace_back(d2, j);
  }
  std::sort(by_dist.begin(), by_dist.end());  // pair order = (distance, index)
  std::vector<std::size_t> idx(k);
  for (std::size_t n = 0; n < k; ++n) idx[n] = by_dist[n].second;
  return idx;
}

}  // namespace detail

/// Mean of the k nearest neighbors of batch[i]. Per-coordinate summation is
/// done in sorted-value order, so the result is invariant to batch
/// permutation (not just the neighbor set).
inline std::vector<double> knn_mean(const Tensor& batch, std::size_t i, std::size_t k) {
  const auto idx = detail::knn_indices(batch, i, k);
  const std::size_t D = batch.cols();
  std::vector<double> mean(D, 0.0);
  std::vector<double> vals(k);
  for (std::size_t c = 0; c < D; ++c) {
    for (std::size_t n = 0; n < k; ++n) vals[n] = batch.at(idx[n], c);
    std::sort(vals.begin(), vals.end());
    double acc = 0.0;
    for (double v : vals) acc += v;
    mean[c] = acc / static_cast<double>(k);
  }
  return mean;
}

inline EntropyGradBatch knn_entropy_gradients(const Tensor& batch, std::size_t k,
                                              double alpha) {
  if (!(alpha > 0.0)) throw Error("knn_entropy_gradients: alpha must be positive");
  const std::size_t B = batch.rows(), D = batch.cols();
  if (B < k + 1)
    throw KTooLarge("knn_entropy_gradients: batch size must exceed k");
  EntropyGradBatch out;
  out.directions = Tensor::matrix(B, D);
  out.degenerate.assign(B, false);
  out.alpha = alpha;
  out.k = k;
  for (std::size_t i = 0; i < B; ++i) {
    const auto mu = knn_mean(batch, i, k);
    double norm2 = 0.0;
    for (std::size_t c = 0; c < D; ++c) {
      const double d = mu[c] - batch.at(i, c);
      out.directions.at(i, c) = d;
      norm2 += d * d;
    }
    const double norm = std::sqrt(norm2);
    if (norm < 1e-12) {
      out.degenerate[i] = true;
      for (std::size_t c = 0; c < D; ++c) out.directions.at(i, c) = 0.0;
    } else {
      for (std::size_t c = 0; c < D; ++c) out.directions.at(i, c) /= norm;
    }
  }
  return out;
}

/// Monte-Carlo U(q) = mean_i -log q(z_i | x_i) for a diagonal-Gaussian q
/// read off the inference net (first z_dim outputs the mean, the rest the
/// log-std). x comes in as a tape node so the bound is differentiable
/// through the generator as well as through q.
inline int vi_upper_bound(Tape& tape, nn::Mlp& q, int x_node, const Tensor& z) {
  const std::size_t B = z.rows(), zd = z.cols();
  if (tape.value(x_node).rows() != B)
    throw ShapeMismatch("vi_upper_bound: x/z batch sizes differ");
  if (q.output_dim() != 2 * zd)
    throw ShapeMismatch("vi_upper_bound: inference net must emit 2 * z_dim values");

  const int q_out = q.forward(tape, x_node, BnMode::Train);
  const int mu = tape.slice_cols(q_out, 0, static_cast<int>(zd));
  const int log_std = tape.slice_cols(q_out, static_cast<int>(zd), static_cast<int>(2 * zd));

  const int diff = tape.sub(tape.leaf(z), mu);
  const int quad = tape.mul(tape.square(diff), tape.exp(tape.scale(log_std, -2.0)));
  const int per_dim = tape.add_scalar(
      tape.add(tape.scale(quad, 0.5), log_std), 0.5 * std::log(2.0 * std::numbers::pi));
  return tape.scale(tape.sum_all(per_dim), 1.0 / static_cast<double>(B));
}

/// Convenience evaluation without an existing tape.
inline double vi_upper_bound_value(nn::Mlp& q, const Tensor& x, const Tensor& z) {
  Tape tape;
  return tape.value(vi_upper_bound(tape, q, tape.leaf(x), z)).data[0];
}

/// Residual of H(x) = H(z) - H(z|x) + H(x|z).
inline double entropy_identity_check(double hx, double hz, double hz_given_x,
                                     double hx_given_z) {
  if (!std::isfinite(hx) || !std::isfinite(hz) || !std::isfinite(hz_given_x) ||
      !std::isfinite(hx_given_z))
    throw NonFinite("entropy_identity_check: inputs must be finite");
  return std::abs(hx - (hz - hz_given_x + hx_given_z));
}

}  // namespace egan::entropy
