#pragma once

// Model variants, run configuration, and the network bundle that training
// produces and evaluation consumes.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egan/errors.hpp"
#include "egan/nn.hpp"
#include "egan/rng.hpp"
#include "egan/synthetic.hpp"
#include "egan/tensor.hpp"

namespace egan::train {

enum class ModelKind : std::uint8_t { Gan, EganConst, EganEntNN, EganEntVI };

inline const char* model_name(ModelKind m) {
  switch (m) {
    case ModelKind::Gan: return "gan";
    case ModelKind::EganConst: return "egan-const";
    case ModelKind::EganEntNN: return "egan-ent-nn";
    case ModelKind::EganEntVI: return "egan-ent-vi";
  }
  return "unknown";
}

inline ModelKind parse_model(const std::string& s) {
  if (s == "gan") return ModelKind::Gan;
  if (s == "egan-const") return ModelKind::EganConst;
  if (s == "egan-ent-nn") return ModelKind::EganEntNN;
  if (s == "egan-ent-vi") return ModelKind::EganEntVI;
  throw ConfigError("unknown model '" + s +
                    "' (expected gan | egan-const | egan-ent-nn | egan-ent-vi)");
}

struct TrainConfig {
  ModelKind model = ModelKind::EganEntNN;
  synth::DatasetKind dataset = synth::DatasetKind::MoG4;
  std::size_t z_dim = 4;
  std::size_t batch = 128;
  std::size_t iterations = 20000;
  nn::AdamConfig adam;            // generator (and inference net): lr 2e-4
  // A shared rate lets the unbounded energy head integrate residual gen/data
  // mismatch and drift by hundreds of nats on asymmetric data; a 10x slower
  // discriminator keeps the surface at O(1) scale and still develops the
  // cross-mode level differences.
  double lr_disc = 2e-5;
  std::size_t knn_k = 5;          // EganEntNN
  double alpha = 1.0;             // EganEntNN direction scale
  double entropy_weight = 1.0;    // EganEntVI bound weight
  std::uint64_t seed = 1;
  std::size_t eval_every = 1000;  // loss-curve cadence

  void validate() const {
    if (z_dim < 1) throw ConfigError("z_dim must be >= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(lr_disc > 0.0)) throw ConfigError("lr_disc must be > 0");
    if (entropy_weight < 0.0) throw ConfigError("entropy_weight must be >= 0");
    if (model == ModelKind::EganEntNN) {
      if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0 for egan-ent-nn");
      if (knn_k < 1 || knn_k >= batch)
        throw ConfigError("need 1 <= knn_k < batch for egan-ent-nn");
    }
  }
};

inline nlohmann::json config_json(const TrainConfig& c) {
  return nlohmann::json{{"model", model_name(c.model)},
                        {"dataset", synth::dataset_name(c.dataset)},
                        {"z_dim", c.z_dim},
                        {"batch", c.batch},
                        {"iterations", c.iterations},
                        {"lr", c.adam.lr},
                        {"lr_disc", c.lr_disc},
                        {"beta1", c.adam.beta1},
                        {"beta2", c.adam.beta2},
                        {"adam_eps", c.adam.eps},
                        {"knn_k", c.knn_k},
                        {"alpha", c.alpha},
                        {"entropy_weight", c.entropy_weight},
                        {"seed", c.seed},
                        {"eval_every", c.eval_every}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("model")) c.model = parse_model(j.at("model").get<std::string>());
  if (j.contains("dataset"))
    c.dataset = synth::parse_dataset(j.at("dataset").get<std::string>());
  c.z_dim = j.value("z_dim", c.z_dim);
  c.batch = j.value("batch", c.batch);
  c.iterations = j.value("iterations", c.iterations);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.lr_disc = j.value("lr_disc", c.lr_disc);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("adam_eps", c.adam.eps);
  c.knn_k = j.value("knn_k", c.knn_k);
  c.alpha = j.value("alpha", c.alpha);
  c.entropy_weight = j.value("entropy_weight", c.entropy_weight);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validate();
  return c;
}

/// Everything a run trains: the nets plus their optimizer states. The
/// inference net exists only for the VI variant.
struct ModelBundle {
  TrainConfig config;
  nn::Mlp gen;
  nn::Mlp disc;
  std::optional<nn::Mlp> q;
  nn::Adam opt_gen, opt_disc, opt_q;
};

inline ModelBundle make_bundle(const TrainConfig& cfg) {
  cfg.validate();
  Rng gen_rng(derive_seed(cfg.seed, "init.gen"));
  Rng disc_rng(derive_seed(cfg.seed, "init.disc"));
  nn::AdamConfig disc_adam = cfg.adam;
  disc_adam.lr = cfg.lr_disc;
  ModelBundle b{cfg,
                nn::make_generator(cfg.z_dim, gen_rng),
                nn::make_discriminator(disc_rng),
                std::nullopt,
                nn::Adam(cfg.adam),
                nn::Adam(disc_adam),
                nn::Adam(cfg.adam)};
  if (cfg.model == ModelKind::EganEntVI) {
    Rng q_rng(derive_seed(cfg.seed, "init.q"));
    b.q.emplace(nn::make_inference_net(cfg.z_dim, q_rng));
  }
  return b;
}

/// Noise prior: uniform(-1, 1)^z_dim.
inline Tensor sample_noise(std::size_t batch, std::size_t z_dim, Rng& rng) {
  Tensor z = Tensor::matrix(batch, z_dim);
  for (double& v : z.data) v = rng.uniform(-1.0, 1.0);
  return z;
}

inline Tensor points_to_tensor(const std::vector<synth::Point2>& pts) {
  Tensor t = Tensor::matrix(pts.size(), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    t.at(i, 0) = pts[i].x;
    t.at(i, 1) = pts[i].y;
  }
  return t;
}

/// Eval-mode generation (running batchnorm statistics), chunked so large
/// sample counts stay within a modest memory footprint.
inline Tensor generate_samples(ModelBundle& b, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t out_dim = b.gen.output_dim();
  Tensor out = Tensor::matrix(n, out_dim);
  const std::size_t chunk = 4096;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    const Tensor z = sample_noise(m, b.config.z_dim, rng);
    const Tensor x = b.gen.forward_nograd(z, BnMode::Eval);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t c = 0; c < out_dim; ++c) out.at(start + i, c) = x.at(i, c);
  }
  return out;
}

}  // namespace egan::train
