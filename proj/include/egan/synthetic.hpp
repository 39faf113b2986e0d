#pragma once

// The three analytic 2D benchmark distributions, with exact ancestral
// sampling, stabilized log-density, and ground-truth energy grids.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "egan/errors.hpp"
#include "egan/rng.hpp"

namespace egan::synth {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Isotropic 2D Gaussian mixture.
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<Point2> means;
  std::vector<double> stds;

  std::size_t components() const { return weights.size(); }

  void validate() const {
    if (weights.size() != means.size() || weights.size() != stds.size())
      throw DimensionMismatch("GaussianMixture: component lists differ in length");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw Error("GaussianMixture: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("GaussianMixture: weights must sum to 1");
    for (double s : stds)
      if (!(s > 0.0)) throw Error("GaussianMixture: stds must be positive");
  }
};

enum class DatasetKind : std::uint8_t { MoG4, TwoSpirals, BiasedMoG2 };

inline const char* dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::MoG4: return "mog4";
    case DatasetKind::TwoSpirals: return "two-spirals";
    case DatasetKind::BiasedMoG2: return "biased-mog2";
  }
  return "?";
}

inline DatasetKind parse_dataset(const std::string& s) {
  if (s == "mog4") return DatasetKind::MoG4;
  if (s == "two-spirals") return DatasetKind::TwoSpirals;
  if (s == "biased-mog2") return DatasetKind::BiasedMoG2;
  throw ConfigError("unknown dataset: " + s);
}

/// Benchmark geometry. Grid-of-Gaussians at (+-2, +-2) with sigma 0.5; a
/// 0.9/0.1 biased pair at (-2,0)/(2,0); two interleaved Archimedean spiral
/// arms (r = 0.5 + 2t, theta = 3*pi*t, t in [0,1], 100 centers per arm,
/// second arm rotated by pi, sigma 0.1).
inline GaussianMixture make_dataset(DatasetKind kind) {
  GaussianMixture m;
  switch (kind) {
    case DatasetKind::MoG4:
      m.weights = {0.25, 0.25, 0.25, 0.25};
      m.means = {{2, 2}, {-2, 2}, {-2, -2}, {2, -2}};
      m.stds = {0.5, 0.5, 0.5, 0.5};
      break;
    case DatasetKind::BiasedMoG2:
      m.weights = {0.9, 0.1};
      m.means = {{-2, 0}, {2, 0}};
      m.stds = {0.5, 0.5};
      break;
    case DatasetKind::TwoSpirals: {
      const std::size_t per_arm = 100;
      for (int arm = 0; arm < 2; ++arm) {
        for (std::size_t i = 0; i < per_arm; ++i) {
          const double t = static_cast<double>(i) / static_cast<double>(per_arm - 1);
          const double r = 0.5 + 2.0 * t;
          const double theta = 3.0 * std::numbers::pi * t +
                               (arm == 1 ? std::numbers::pi : 0.0);
          m.weights.push_back(1.0 / (2.0 * per_arm));
          m.means.push_back({r * std::cos(theta), r * std::sin(theta)});
          m.stds.push_back(0.1);
        }
      }
      break;
    }
  }
  m.validate();
  return m;
}

/// Ancestral sampling with the component index of each draw.
inline std::vector<Point2> sample_labeled(const GaussianMixture& m, std::size_t n,
                                          std::uint64_t seed,
                                          std::vector<std::size_t>* labels = nullptr) {
  if (n < 1) throw Error("sample: n must be >= 1");
  m.validate();
  Rng rng(seed);
  std::vector<Point2> out;
  out.reserve(n);
  if (labels != nullptr) {
    labels->clear();
    labels->reserve(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.categorical(m.weights);
    if (labels != nullptr) labels->push_back(c);
    out.push_back({m.means[c].x + m.stds[c] * rng.normal(),
                   m.means[c].y + m.stds[c] * rng.normal()});
  }
  return out;
}

inline std::vector<Point2> sample(const GaussianMixture& m, std::size_t n,
                                  std::uint64_t seed) {
  return sample_labeled(m, n, seed, nullptr);
}

/// log p(x) via log-sum-exp over components.
inline double log_density(const GaussianMixture& m, Point2 p) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(m.components());
  for (std::size_t c = 0; c < m.components(); ++c) {
    const double s2 = m.stds[c] * m.stds[c];
    const double dx = p.x - m.means[c].x, dy = p.y - m.means[c].y;
    const double t = std::log(m.weights[c]) - std::log(2.0 * std::numbers::pi) -
                     std::log(s2) - (dx * dx + dy * dy) / (2.0 * s2);
    terms[c] = t;
    best = std::max(best, t);
  }
  if (!std::isfinite(best)) return best;  // all weights zero-mass at p
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

/// Axis-aligned evaluation grid; values are stored row-major with x fastest:
/// values[iy * nx + ix] belongs to the cell center (x_center(ix), y_center(iy)).
struct Grid2D {
  double x_min = -5.0, x_max = 5.0, y_min = -5.0, y_max = 5.0;
  std::size_t nx = 100, ny = 100;
  std::vector<double> values;

  void validate_spec() const {
    if (nx < 1 || ny < 1) throw Error("Grid2D: nx, ny must be >= 1");
    if (!(x_min < x_max) || !(y_min < y_max)) throw Error("Grid2D: bounds out of order");
  }

  std::size_t cells() const { return nx * ny; }
  double dx() const { return (x_max - x_min) / static_cast<double>(nx); }
  double dy() const { return (y_max - y_min) / static_cast<double>(ny); }
  double x_center(std::size_t ix) const { return x_min + (static_cast<double>(ix) + 0.5) * dx(); }
  double y_center(std::size_t iy) const { return y_min + (static_cast<double>(iy) + 0.5) * dy(); }

  double& at(std::size_t ix, std::size_t iy) { return values[iy * nx + ix]; }
  double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }

  bool same_spec(const Grid2D& o) const {
    return x_min == o.x_min && x_max == o.x_max && y_min == o.y_min && y_max == o.y_max &&
           nx == o.nx && ny == o.ny;
  }

  static Grid2D spec(double x0, double x1, double y0, double y1, std::size_t nx_,
                     std::size_t ny_) {
    Grid2D g;
    g.x_min = x0; g.x_max = x1; g.y_min = y0; g.y_max = y1;
    g.nx = nx_; g.ny = ny_;
    g.validate_spec();
    return g;
  }

  /// Default canvas shared by every dataset.
  static Grid2D default_spec() { return spec(-5, 5, -5, 5, 100, 100); }
};

/// -log p at each cell center.
inline Grid2D true_energy_grid(const GaussianMixture& m, Grid2D g) {
  g.validate_spec();
  g.values.assign(g.cells(), 0.0);
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix)
      g.at(ix, iy) = -log_density(m, {g.x_center(ix), g.y_center(iy)});
  return g;
}

}  // namespace egan::synth
