#pragma once

// Canvas-histogram evaluation: empirical and analytic cell distributions,
// the energy-renormalized discriminator distribution, pairwise KL tables,
// and per-sample gradient-field reports.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egan/entropy.hpp"
#include "egan/errors.hpp"
#include "egan/io.hpp"
#include "egan/model.hpp"
#include "egan/nn.hpp"
#include "egan/simplex.hpp"
#include "egan/synthetic.hpp"
#include "egan/tensor.hpp"

namespace egan::eval {

/// A probability distribution over grid cells; values of the embedded grid
/// are the cell masses. out_of_bounds counts samples clamped to edge cells.
struct HistogramGrid {
  synth::Grid2D grid;
  std::size_t out_of_bounds = 0;

  bool valid() const {
    for (double v : grid.values)
      if (!(v >= 0.0)) return false;
    return Simplex{grid.values}.valid();
  }
};

namespace detail {

inline std::size_t clamp_index(double coord, double lo, double step, std::size_t n,
                               bool& oob) {
  const double t = (coord - lo) / step;
  if (t < 0.0) {
    oob = true;
    return 0;
  }
  auto i = static_cast<std::size_t>(t);
  if (i >= n) {
    if (t > static_cast<double>(n)) oob = true;  // beyond the far edge, not on it
    return n - 1;
  }
  return i;
}

}  // namespace detail

/// Nearest-cell-center histogram. Samples outside the canvas are clamped to
/// the boundary cells and counted.
inline HistogramGrid histogram_estimate(const std::vector<synth::Point2>& samples,
                                        synth::Grid2D spec) {
  spec.validate_spec();
  if (samples.empty()) throw EmptySampleSet("histogram_estimate: no samples");
  HistogramGrid h;
  h.grid = std::move(spec);
  h.grid.values.assign(h.grid.cells(), 0.0);
  const double dx = h.grid.dx(), dy = h.grid.dy();
  for (const auto& p : samples) {
    bool oob = false;
    const std::size_t ix = detail::clamp_index(p.x, h.grid.x_min, dx, h.grid.nx, oob);
    const std::size_t iy = detail::clamp_index(p.y, h.grid.y_min, dy, h.grid.ny, oob);
    if (oob) ++h.out_of_bounds;
    h.grid.at(ix, iy) += 1.0;
  }
  const double n = static_cast<double>(samples.size());
  for (double& v : h.grid.values) v /= n;
  return h;
}

inline HistogramGrid histogram_estimate(const Tensor& samples, const synth::Grid2D& spec) {
  if (samples.cols() != 2)
    throw ShapeMismatch("histogram_estimate: samples must be n x 2");
  std::vector<synth::Point2> pts(samples.rows());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {samples.at(i, 0), samples.at(i, 1)};
  return histogram_estimate(pts, spec);
}

/// Analytic mixture restricted to the grid: cell mass proportional to the
/// density at the cell center.
inline HistogramGrid discretize_density(const synth::GaussianMixture& m,
                                        synth::Grid2D spec) {
  spec.validate_spec();
  m.validate();
  HistogramGrid h;
  h.grid = std::move(spec);
  h.grid.values.assign(h.grid.cells(), 0.0);
  // Work from log densities so tight mixtures cannot underflow everywhere.
  std::vector<double> logs(h.grid.cells());
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t iy = 0; iy < h.grid.ny; ++iy)
    for (std::size_t ix = 0; ix < h.grid.nx; ++ix) {
      const double l = synth::log_density(m, {h.grid.x_center(ix), h.grid.y_center(iy)});
      logs[iy * h.grid.nx + ix] = l;
      best = std::max(best, l);
    }
  double total = 0.0;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    h.grid.values[i] = std::exp(logs[i] - best);
    total += h.grid.values[i];
  }
  for (double& v : h.grid.values) v /= total;
  return h;
}

/// p(cell) = exp(-energy) renormalized over the grid, log-sum-exp stabilized.
inline HistogramGrid disc_distribution(const synth::Grid2D& energy) {
  energy.validate_spec();
  if (energy.values.size() != energy.cells())
    throw GridMismatch("disc_distribution: grid has no values");
  for (double v : energy.values)
    if (!std::isfinite(v)) throw NonFinite("disc_distribution: non-finite energy");
  HistogramGrid h;
  h.grid = energy;
  const double m = -*std::min_element(energy.values.begin(), energy.values.end());
  double total = 0.0;
  for (std::size_t i = 0; i < h.grid.values.size(); ++i) {
    h.grid.values[i] = std::exp(-energy.values[i] - m);
    total += h.grid.values[i];
  }
  for (double& v : h.grid.values) v /= total;
  return h;
}

/// KL(p~ || q~) in nats with additive smoothing p~ = (p + eps)/(1 + n eps).
inline double kl_divergence(const HistogramGrid& p, const HistogramGrid& q,
                            double epsilon = 1e-10) {
  if (!p.grid.same_spec(q.grid)) throw GridMismatch("kl_divergence: grid specs differ");
  if (!(epsilon > 0.0)) throw ConfigError("kl_divergence: epsilon must be > 0");
  const double n = static_cast<double>(p.grid.cells());
  const double z = 1.0 + n * epsilon;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.grid.values.size(); ++i) {
    const double ps = (p.grid.values[i] + epsilon) / z;
    const double qs = (q.grid.values[i] + epsilon) / z;
    acc += ps * std::log(ps / qs);
  }
  return acc;
}

/// The ten divergences among {data, emp, gen, disc} that involve a learned
/// distribution, plus the two data/emp reference entries.
struct KlTable {
  double gen_emp = 0, emp_gen = 0;
  double gen_data = 0, data_gen = 0;
  double disc_emp = 0, emp_disc = 0;
  double disc_data = 0, data_disc = 0;
  double disc_gen = 0, gen_disc = 0;
  double data_emp = 0, emp_data = 0;

  std::vector<std::pair<std::string, double>> entries() const {
    return {{"KL(gen||emp)", gen_emp},   {"KL(emp||gen)", emp_gen},
            {"KL(gen||data)", gen_data}, {"KL(data||gen)", data_gen},
            {"KL(disc||emp)", disc_emp}, {"KL(emp||disc)", emp_disc},
            {"KL(disc||data)", disc_data}, {"KL(data||disc)", data_disc},
            {"KL(disc||gen)", disc_gen}, {"KL(gen||disc)", gen_disc},
            {"KL(data||emp)", data_emp}, {"KL(emp||data)", emp_data}};
  }

  bool finite() const {
    for (const auto& [name, v] : entries())
      if (!std::isfinite(v) || v < 0.0) return false;
    return true;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    for (const auto& [name, v] : entries()) j[name] = v;
    return j;
  }

  /// 4 x 4 matrix layout, KL(row || column).
  std::string to_text() const {
    const char* names[4] = {"data", "emp", "gen", "disc"};
    double cell[4][4] = {{0, data_emp, data_gen, data_disc},
                         {emp_data, 0, emp_gen, emp_disc},
                         {gen_data, gen_emp, 0, gen_disc},
                         {disc_data, disc_emp, disc_gen, 0}};
    std::ostringstream os;
    os << std::setw(8) << "KL(r||c)";
    for (const char* n : names) os << std::setw(12) << n;
    os << '\n';
    for (int r = 0; r < 4; ++r) {
      os << std::setw(8) << names[r];
      for (int c = 0; c < 4; ++c) {
        if (r == c)
          os << std::setw(12) << "-";
        else
          os << std::setw(12) << std::fixed << std::setprecision(4) << cell[r][c];
      }
      os << '\n';
    }
    return os.str();
  }
};

inline KlTable kl_table(const HistogramGrid& p_data, const HistogramGrid& p_emp,
                        const HistogramGrid& p_gen, const HistogramGrid& p_disc,
                        double epsilon = 1e-10) {
  KlTable t;
  t.gen_emp = kl_divergence(p_gen, p_emp, epsilon);
  t.emp_gen = kl_divergence(p_emp, p_gen, epsilon);
  t.gen_data = kl_divergence(p_gen, p_data, epsilon);
  t.data_gen = kl_divergence(p_data, p_gen, epsilon);
  t.disc_emp = kl_divergence(p_disc, p_emp, epsilon);
  t.emp_disc = kl_divergence(p_emp, p_disc, epsilon);
  t.disc_data = kl_divergence(p_disc, p_data, epsilon);
  t.data_disc = kl_divergence(p_data, p_disc, epsilon);
  t.disc_gen = kl_divergence(p_disc, p_gen, epsilon);
  t.gen_disc = kl_divergence(p_gen, p_disc, epsilon);
  t.data_emp = kl_divergence(p_data, p_emp, epsilon);
  t.emp_data = kl_divergence(p_emp, p_data, epsilon);
  return t;
}

/// Discriminator forward (eval mode) at every cell center, chunked to keep
/// the transient activations small.
inline synth::Grid2D energy_grid(nn::Mlp& disc, synth::Grid2D spec) {
  spec.validate_spec();
  spec.values.assign(spec.cells(), 0.0);
  const std::size_t n = spec.cells();
  const std::size_t chunk = 2048;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    Tensor centers = Tensor::matrix(m, 2);
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t cell = start + i;
      centers.at(i, 0) = spec.x_center(cell % spec.nx);
      centers.at(i, 1) = spec.y_center(cell / spec.nx);
    }
    const Tensor out = disc.forward_nograd(centers, BnMode::Eval);
    for (std::size_t i = 0; i < m; ++i) spec.values[start + i] = out.at(i, 0);
  }
  return spec;
}

/// Per-sample record of the discriminator input-gradient and the model's
/// entropy gradient at generated points x = G(z). The entropy column is the
/// per-sample injected direction for the NN variant, the input-gradient of
/// the weighted VI bound for the VI variant, and zero otherwise.
inline std::vector<io::GradFieldRecord> gradient_field_report(train::ModelBundle& b,
                                                              const Tensor& z) {
  const Tensor x = b.gen.forward_nograd(z, BnMode::Eval);
  const std::size_t B = x.rows();

  Tape tape;
  const int xn = tape.leaf(x);
  const int c = b.disc.forward(tape, xn, BnMode::Eval);
  tape.backward(tape.sum_all(c));
  const Tensor& dgrad = tape.grad(xn);

  Tensor ent = Tensor::matrix(B, 2, 0.0);
  if (b.config.model == train::ModelKind::EganEntNN) {
    const auto dirs = entropy::knn_entropy_gradients(x, b.config.knn_k, b.config.alpha);
    for (std::size_t i = 0; i < B; ++i) {
      ent.at(i, 0) = dirs.alpha * dirs.directions.at(i, 0);
      ent.at(i, 1) = dirs.alpha * dirs.directions.at(i, 1);
    }
  } else if (b.config.model == train::ModelKind::EganEntVI) {
    Tape qt;
    const int xq = qt.leaf(x);
    const int u = entropy::vi_upper_bound(qt, *b.q, xq, z);
    qt.backward(u);
    const double s = b.config.entropy_weight * static_cast<double>(B);
    const Tensor& g = qt.grad(xq);
    for (std::size_t i = 0; i < B; ++i) {
      ent.at(i, 0) = s * g.at(i, 0);
      ent.at(i, 1) = s * g.at(i, 1);
    }
  }

  std::vector<io::GradFieldRecord> recs(B);
  for (std::size_t i = 0; i < B; ++i) {
    recs[i].pos = {x.at(i, 0), x.at(i, 1)};
    recs[i].disc_grad = {dgrad.at(i, 0), dgrad.at(i, 1)};
    recs[i].entropy_grad = {ent.at(i, 0), ent.at(i, 1)};
  }
  return recs;
}

}  // namespace egan::eval
