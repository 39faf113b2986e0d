#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <vector>

#include "egan/errors.hpp"
#include "egan/rng.hpp"

namespace egan {

/// 32-byte-aligned storage so vectorized kernels always see the same
/// alignment; mixed alignments would make results vary by allocation.
using AlignedVec = std::vector<double, Eigen::aligned_allocator<double>>;

/// Dense row-major tensor of doubles. Rank is 1 or 2 in practice (vectors,
/// batch matrices); shape is kept general.
struct Tensor {
  std::vector<std::size_t> shape;
  AlignedVec data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(numel_of(shape), fill) {}

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? numel() / rows() : shape[1]; }

  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) {
    return Tensor({r, c}, fill);
  }

  static Tensor row(std::initializer_list<double> v) {
    Tensor t({1, v.size()});
    std::copy(v.begin(), v.end(), t.data.begin());
    return t;
  }

  static Tensor from_rows(std::size_t r, std::size_t c, const std::vector<double>& flat) {
    if (flat.size() != r * c) throw ShapeMismatch("Tensor::from_rows: flat size mismatch");
    Tensor t;
    t.shape = {r, c};
    t.data.assign(flat.begin(), flat.end());
    return t;
  }

  static Tensor uniform(std::vector<std::size_t> s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
  }
};

namespace detail {
inline void require_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << what << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs "
       << b.rows() << "x" << b.cols() << ")";
    throw ShapeMismatch(os.str());
  }
}
}  // namespace detail

}  // namespace egan
