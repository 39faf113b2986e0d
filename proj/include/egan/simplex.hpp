#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "egan/errors.hpp"
#include "egan/rng.hpp"

namespace egan {

/// Explicit probability vector over a finite space of n points.
struct Simplex {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  static constexpr double kSumTol = 1e-12;

  bool valid() const {
    double sum = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) return false;
      sum += p;
    }
    return std::abs(sum - 1.0) <= kSumTol * std::max<double>(1, probs.size());
  }

  /// Validating factory; throws if entries are negative or do not sum to 1.
  static Simplex from(std::vector<double> p) {
    Simplex s{std::move(p)};
    if (!s.valid()) throw Error("Simplex: entries must be >= 0 and sum to 1");
    return s;
  }

  static Simplex uniform(std::size_t n) {
    return Simplex{std::vector<double>(n, 1.0 / static_cast<double>(n))};
  }

  /// Random distribution with every entry >= min_prob (Dirichlet(1) draw
  /// mixed with enough uniform mass to clear the floor).
  static Simplex random_full_support(std::size_t n, Rng& rng, double min_prob = 1e-3) {
    std::vector<double> p(n);
    double sum = 0.0;
    for (auto& v : p) {
      v = -std::log(1.0 - rng.uniform());
      sum += v;
    }
    for (auto& v : p) v /= sum;
    const double eps = 2.0 * min_prob;
    double total = 0.0;
    for (auto& v : p) {
      v = (v + eps) / (1.0 + eps * static_cast<double>(n));
      total += v;
    }
    p.back() += 1.0 - total;  // absorb rounding
    return Simplex{std::move(p)};
  }
};

/// Unbounded per-point scalar cost (the discriminator over a finite space).
struct CostVector {
  std::vector<double> costs;

  std::size_t size() const { return costs.size(); }
  double operator[](std::size_t i) const { return costs[i]; }

  bool finite() const {
    return std::all_of(costs.begin(), costs.end(),
                       [](double c) { return std::isfinite(c); });
  }
};

}  // namespace egan
