#pragma once

// Minimax training loops for the four model variants: the BCE baseline
// (gan), the unregularized energy game (egan-const), and the two
// entropy-regularized variants (egan-ent-nn, egan-ent-vi).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egan/autodiff.hpp"
#include "egan/entropy.hpp"
#include "egan/errors.hpp"
#include "egan/evaluate.hpp"
#include "egan/model.hpp"
#include "egan/nn.hpp"
#include "egan/rng.hpp"
#include "egan/synthetic.hpp"
#include "egan/tensor.hpp"

namespace egan::train {

/// Discriminator objective mean(c_real) - mean(c_fake); minimizing it widens
/// the fake-over-real cost gap.
inline int egan_disc_loss(Tape& tape, int c_real, int c_fake) {
  return tape.sub(tape.mean_all(c_real), tape.mean_all(c_fake));
}

/// Generator objective. The loss node is mean(c_fake) for every energy
/// variant; the VI variant adds entropy_weight * U(q), and the NN variant
/// contributes through gradient injection instead of the loss value: the
/// caller receives a seed adding (alpha / batch) * d_i to each sample's
/// backward gradient, commensurate with the mean-reduced cost term.
inline int egan_gen_loss(Tape& tape, ModelKind model, int c_fake, int x_fake,
                         const entropy::EntropyGradBatch* nn_dirs,
                         std::optional<int> vi_bound, double entropy_weight,
                         std::vector<GradSeed>& seeds) {
  const int base = tape.mean_all(c_fake);
  switch (model) {
    case ModelKind::EganConst:
      return base;
    case ModelKind::EganEntNN: {
      if (nn_dirs == nullptr)
        throw MissingEntropyTerm("egan_gen_loss: egan-ent-nn needs injected directions");
      const Tensor& x = tape.value(x_fake);
      if (nn_dirs->directions.rows() != x.rows() || nn_dirs->directions.cols() != x.cols())
        throw ShapeMismatch("egan_gen_loss: direction batch does not match x_fake");
      Tensor seed = Tensor::zeros_like(x);
      const double s = nn_dirs->alpha / static_cast<double>(x.rows());
      for (std::size_t i = 0; i < seed.numel(); ++i)
        seed.data[i] = s * nn_dirs->directions.data[i];
      seeds.push_back({x_fake, std::move(seed)});
      return base;
    }
    case ModelKind::EganEntVI:
      if (!vi_bound.has_value())
        throw MissingEntropyTerm("egan_gen_loss: egan-ent-vi needs the bound node");
      return tape.add(base, tape.scale(*vi_bound, entropy_weight));
    case ModelKind::Gan:
      break;
  }
  throw Error("egan_gen_loss: not an energy-model kind");
}

/// Binary cross-entropy with logits, real labeled 1 and fake labeled 0,
/// averaged over the two halves.
inline int gan_disc_loss(Tape& tape, int d_real, int d_fake) {
  const int real_term = tape.mean_all(tape.softplus(tape.scale(d_real, -1.0)));
  const int fake_term = tape.mean_all(tape.softplus(d_fake));
  return tape.scale(tape.add(real_term, fake_term), 0.5);
}

/// Non-saturating generator loss -mean(log sigmoid(d_fake)).
inline int gan_gen_loss(Tape& tape, int d_fake) {
  return tape.mean_all(tape.softplus(tape.scale(d_fake, -1.0)));
}

inline std::pair<int, int> gan_losses(Tape& tape, int d_real, int d_fake) {
  return {gan_disc_loss(tape, d_real, d_fake), gan_gen_loss(tape, d_fake)};
}

struct StepMetrics {
  double disc_loss = 0.0;
  double gen_loss = 0.0;
  std::optional<double> vi_bound;
};

/// One discriminator update on a fresh (real, fake) pair, then one generator
/// update (plus the inference net for VI) on fresh noise. The generator's
/// running batchnorm statistics advance exactly once per step, in the
/// generator phase.
inline StepMetrics train_step(ModelBundle& b, const TrainConfig& cfg, const Tensor& real,
                              Rng& noise_rng) {
  if (real.cols() != b.disc.input_dim())
    throw ShapeMismatch("train_step: data batch width does not match the discriminator");
  StepMetrics metrics;

  {
    const Tensor z = sample_noise(real.rows(), cfg.z_dim, noise_rng);
    const Tensor x_fake = b.gen.forward_nograd(z, BnMode::Train, false);
    Tape tape;
    const int cr = b.disc.forward(tape, tape.leaf(real), BnMode::Train);
    const int cf = b.disc.forward(tape, tape.leaf(x_fake), BnMode::Train);
    const int loss = (cfg.model == ModelKind::Gan) ? gan_disc_loss(tape, cr, cf)
                                                   : egan_disc_loss(tape, cr, cf);
    metrics.disc_loss = tape.value(loss).data[0];
    if (!std::isfinite(metrics.disc_loss))
      throw NonFinite("train_step: discriminator loss is non-finite");
    tape.backward(loss);
    b.opt_disc.step(b.disc.params());
  }

  {
    const Tensor z = sample_noise(cfg.batch, cfg.z_dim, noise_rng);
    Tape tape;
    const int x_fake = b.gen.forward(tape, tape.leaf(z), BnMode::Train, true);
    const int c_fake = b.disc.forward(tape, x_fake, BnMode::Train);
    std::vector<GradSeed> seeds;
    int loss = -1;
    switch (cfg.model) {
      case ModelKind::Gan:
        loss = gan_gen_loss(tape, c_fake);
        break;
      case ModelKind::EganConst:
        loss = egan_gen_loss(tape, cfg.model, c_fake, x_fake, nullptr, std::nullopt, 0.0,
                             seeds);
        break;
      case ModelKind::EganEntNN: {
        const auto dirs =
            entropy::knn_entropy_gradients(tape.value(x_fake), cfg.knn_k, cfg.alpha);
        loss = egan_gen_loss(tape, cfg.model, c_fake, x_fake, &dirs, std::nullopt, 0.0,
                             seeds);
        break;
      }
      case ModelKind::EganEntVI: {
        const int u = entropy::vi_upper_bound(tape, *b.q, x_fake, z);
        metrics.vi_bound = tape.value(u).data[0];
        if (!std::isfinite(*metrics.vi_bound))
          throw NonFinite("train_step: vi bound is non-finite");
        loss = egan_gen_loss(tape, cfg.model, c_fake, x_fake, nullptr, u,
                             cfg.entropy_weight, seeds);
        break;
      }
    }
    metrics.gen_loss = tape.value(loss).data[0];
    if (!std::isfinite(metrics.gen_loss))
      throw NonFinite("train_step: generator loss is non-finite");
    tape.backward(loss, seeds);
    b.opt_gen.step(b.gen.params());
    if (b.q.has_value()) b.opt_q.step(b.q->params());
    // The generator backward also deposited gradients on the discriminator;
    // drop them so the next discriminator phase starts clean.
    b.disc.params().zero_grads();
  }

  return metrics;
}

/// Everything a completed run reports. Wall-clock is carried for sidecar
/// metadata but deliberately left out of to_json() so identically seeded
/// runs serialize byte-identically.
struct RunReport {
  TrainConfig config;
  std::vector<std::size_t> curve_iters;
  std::vector<double> disc_curve;
  std::vector<double> gen_curve;
  std::vector<double> vi_curve;  // populated only for egan-ent-vi
  synth::Grid2D energy;          // model energy on the default canvas
  Tensor samples;                // eval-mode generated sample set
  eval::KlTable kl;
  std::size_t oob_gen = 0;   // generated samples clamped into the canvas
  std::size_t oob_data = 0;  // data samples clamped into the canvas
  double wall_seconds = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config_json(config);
    j["curves"] = {{"iters", curve_iters},
                   {"disc_loss", disc_curve},
                   {"gen_loss", gen_curve}};
    if (!vi_curve.empty()) j["curves"]["vi_bound"] = vi_curve;
    j["energy"] = {{"x_min", energy.x_min}, {"x_max", energy.x_max},
                   {"y_min", energy.y_min}, {"y_max", energy.y_max},
                   {"nx", energy.nx},       {"ny", energy.ny},
                   {"values", energy.values}};
    std::vector<std::vector<double>> rows(samples.rows());
    for (std::size_t i = 0; i < samples.rows(); ++i)
      rows[i] = {samples.at(i, 0), samples.at(i, 1)};
    j["samples"] = rows;
    j["kl"] = kl.to_json();
    j["out_of_bounds"] = {{"gen", oob_gen}, {"data", oob_data}};
    return j;
  }
};

/// Learned energy on the grid: the discriminator output for the energy
/// models, its negation for the BCE baseline (whose logit estimates
/// log-density rather than energy).
inline synth::Grid2D model_energy_grid(ModelBundle& b, const synth::Grid2D& spec) {
  synth::Grid2D g = eval::energy_grid(b.disc, spec);
  if (b.config.model == ModelKind::Gan)
    for (double& v : g.values) v = -v;
  return g;
}

struct TrainResult {
  RunReport report;
  ModelBundle bundle;
};

inline TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  ModelBundle b = make_bundle(cfg);
  const synth::GaussianMixture mix = synth::make_dataset(cfg.dataset);
  Rng data_rng(derive_seed(cfg.seed, "data"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));

  RunReport rep;
  rep.config = cfg;
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const Tensor real =
        points_to_tensor(synth::sample(mix, cfg.batch, data_rng.next_u64()));
    StepMetrics m;
    try {
      m = train_step(b, cfg, real, noise_rng);
    } catch (const NonFinite& e) {
      throw NonFinite(std::string(e.what()) + " (iteration " + std::to_string(t) + ")");
    }
    if (t % cfg.eval_every == 0 || t + 1 == cfg.iterations) {
      rep.curve_iters.push_back(t);
      rep.disc_curve.push_back(m.disc_loss);
      rep.gen_curve.push_back(m.gen_loss);
      if (m.vi_bound.has_value()) rep.vi_curve.push_back(*m.vi_bound);
    }
  }

  const synth::Grid2D spec = synth::Grid2D::default_spec();
  rep.energy = model_energy_grid(b, spec);
  rep.samples = generate_samples(b, 1000, derive_seed(cfg.seed, "report.samples"));

  const Tensor gen_big = generate_samples(b, 100000, derive_seed(cfg.seed, "eval.noise"));
  const auto data_big = synth::sample(mix, 100000, derive_seed(cfg.seed, "eval.data"));
  const eval::HistogramGrid p_data = eval::discretize_density(mix, spec);
  const eval::HistogramGrid p_emp = eval::histogram_estimate(data_big, spec);
  const eval::HistogramGrid p_gen = eval::histogram_estimate(gen_big, spec);
  const eval::HistogramGrid p_disc = eval::disc_distribution(rep.energy);
  rep.kl = eval::kl_table(p_data, p_emp, p_gen, p_disc);
  rep.oob_gen = p_gen.out_of_bounds;
  rep.oob_data = p_emp.out_of_bounds;

  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(rep), std::move(b)};
}

}  // namespace egan::train
