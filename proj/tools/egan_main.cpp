// Command-line front end. Four subcommands:
//
//   tabular  solve the finite-space game and certify the solution
//   train    run a model, write report + checkpoint + grids + samples
//   eval     rebuild a trained model and recompute its KL table
//   export   emit CSV/PGM artifacts from a run (or the true energy)
//
// Exit codes: 0 success, 1 usage or I/O error, 2 scientific-check failure
// (failed certification or a non-finite training abort).

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "egan/evaluate.hpp"
#include "egan/io.hpp"
#include "egan/tabular.hpp"
#include "egan/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace egan;

namespace {

std::string out_root() {
  const char* env = std::getenv("EGAN_OUT_ROOT");
  return (env && *env) ? env : "runs";
}

std::string iso_time(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (...) {
    pos = 0;
  }
  if (s.empty() || pos != s.size() || s[0] == '-')
    throw ConfigError("expected a nonnegative integer for " + key + ", got '" + s + "'");
  return v;
}

double parse_f64(const std::string& s, const std::string& key) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (...) {
    pos = 0;
  }
  if (s.empty() || pos != s.size())
    throw ConfigError("expected a number for " + key + ", got '" + s + "'");
  return v;
}

void apply_kv(train::TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "model")
    c.model = train::parse_model(value);
  else if (key == "dataset")
    c.dataset = synth::parse_dataset(value);
  else if (key == "z_dim")
    c.z_dim = parse_u64(value, key);
  else if (key == "batch")
    c.batch = parse_u64(value, key);
  else if (key == "iterations")
    c.iterations = parse_u64(value, key);
  else if (key == "lr")
    c.adam.lr = parse_f64(value, key);
  else if (key == "lr_disc")
    c.lr_disc = parse_f64(value, key);
  else if (key == "beta1")
    c.adam.beta1 = parse_f64(value, key);
  else if (key == "beta2")
    c.adam.beta2 = parse_f64(value, key);
  else if (key == "adam_eps")
    c.adam.eps = parse_f64(value, key);
  else if (key == "knn_k")
    c.knn_k = parse_u64(value, key);
  else if (key == "alpha")
    c.alpha = parse_f64(value, key);
  else if (key == "entropy_weight")
    c.entropy_weight = parse_f64(value, key);
  else if (key == "seed")
    c.seed = parse_u64(value, key);
  else if (key == "eval_every")
    c.eval_every = parse_u64(value, key);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

/// Flat `key = value` file; '#' starts a comment, blank lines are skipped.
std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(io::read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

std::pair<std::string, std::string> split_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + s + "'");
  return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

std::vector<synth::Point2> tensor_points(const Tensor& t) {
  std::vector<synth::Point2> pts(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) pts[i] = {t.at(i, 0), t.at(i, 1)};
  return pts;
}

// ---------------------------------------------------------------------------
// tabular
// ---------------------------------------------------------------------------

tabular::Regularizer parse_regularizer(const std::string& s) {
  if (s == "neg-entropy") return tabular::NegEntropy{};
  if (s == "half-l2") return tabular::HalfL2{};
  if (s == "constant") return tabular::ConstantReg{};
  throw ConfigError("unknown regularizer '" + s +
                    "' (expected neg-entropy | half-l2 | constant)");
}

/// Certifies one solved game. Thresholds are fixed here, not configurable:
/// they are the claim the command exists to check.
json certify_tabular(const std::string& kind, std::size_t n, std::uint64_t seed) {
  constexpr double kPrimalTol = 1e-3;
  constexpr double kSpreadTol = 1e-2;
  constexpr double kKktTol = 1e-2;
  constexpr std::size_t kSolverSteps = 20000;
  constexpr double kPrimalLr = 0.5, kDualLr = 0.5;

  const tabular::Regularizer reg = parse_regularizer(kind);
  Rng rng(derive_seed(seed, "tabular.pdata"));
  const Simplex p_data = Simplex::random_full_support(n, rng);

  const auto res = tabular::solve_minimax(reg, p_data, kSolverSteps, kPrimalLr, kDualLr, seed);
  const auto kkt = tabular::verify_kkt(res.p_gen, res.cost, reg, p_data);
  const bool primal_pass = res.primal_residual < kPrimalTol;
  const bool kkt_pass = kkt.all_within(kKktTol);

  // Discriminator form: c must match the zero-dual closed form up to a
  // constant shift, so compare spreads, not values. With a constant
  // regularizer every cost is equally optimal and there is nothing to check.
  json disc_form;
  bool form_pass = true;
  if (std::holds_alternative<tabular::ConstantReg>(reg)) {
    disc_form = {{"check", "not applicable (under-determined)"}, {"pass", true}};
  } else {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double form = std::holds_alternative<tabular::NegEntropy>(reg)
                              ? std::log(p_data[i])
                              : p_data[i];
      const double r = res.cost[i] + form;
      const double d = r - mean;
      mean += d / static_cast<double>(i + 1);
      m2 += d * (r - mean);
    }
    const double spread = std::sqrt(m2 / static_cast<double>(n));
    form_pass = spread < kSpreadTol;
    disc_form = {{"check", std::holds_alternative<tabular::NegEntropy>(reg)
                               ? "std(c + log p_data)"
                               : "std(c + p_data)"},
                 {"spread", spread},
                 {"pass", form_pass}};
  }

  // Margin-loss analysis: the case table must agree with the sign of
  // p_gen - p_data on random pairs, the loss is nonnegative, exactly zero at
  // equality, and near zero at the solved (matched) generator.
  Rng pair_rng(derive_seed(seed, "tabular.pairs"));
  bool cases_ok = true, nonneg_ok = true, fgan_distinct_ok = true;
  for (int t = 0; t < 100; ++t) {
    const Simplex a = Simplex::random_full_support(n, pair_rng);
    const Simplex b = Simplex::random_full_support(n, pair_rng);
    const auto states = tabular::ebgan_optimal_disc(a, b, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto want = a[i] < b[i]   ? tabular::MarginDiscCase::Zero
                        : a[i] > b[i] ? tabular::MarginDiscCase::Margin
                                      : tabular::MarginDiscCase::Undetermined;
      if (states[i] != want) cases_ok = false;
    }
    if (!(tabular::ebgan_generator_loss(a, b, 1.0) >= 0.0)) nonneg_ok = false;
    const auto c = tabular::fgan_optimal_disc(tabular::kl_f_prime, a, b);
    const auto [mn, mx] = std::minmax_element(c.costs.begin(), c.costs.end());
    if (!(*mx - *mn > 0.0)) fgan_distinct_ok = false;
  }
  const double loss_sol = tabular::ebgan_generator_loss(res.p_gen, p_data, 1.0);
  const double loss_eq = tabular::ebgan_generator_loss(p_data, p_data, 1.0);
  const bool ebgan_pass = cases_ok && nonneg_ok && loss_eq == 0.0 && loss_sol < kSpreadTol;

  const auto c_eq = tabular::fgan_optimal_disc(tabular::kl_f_prime, p_data, p_data);
  const auto [eq_mn, eq_mx] = std::minmax_element(c_eq.costs.begin(), c_eq.costs.end());
  const bool fgan_const_at_eq = (*eq_mx - *eq_mn) == 0.0;
  const auto c_sol = tabular::fgan_optimal_disc(tabular::kl_f_prime, p_data, res.p_gen);
  const auto [sol_mn, sol_mx] = std::minmax_element(c_sol.costs.begin(), c_sol.costs.end());
  const double fgan_spread_sol = *sol_mx - *sol_mn;
  const bool fgan_pass = fgan_const_at_eq && fgan_distinct_ok && fgan_spread_sol < kSpreadTol;

  const bool pass = primal_pass && kkt_pass && form_pass && ebgan_pass && fgan_pass;
  return json{
      {"kind", kind},
      {"n", n},
      {"seed", seed},
      {"solver",
       {{"primal_residual", res.primal_residual},
        {"stationarity_spread", res.stationarity_spread},
        {"converged", res.converged},
        {"pass", primal_pass}}},
      {"kkt",
       {{"stationarity", kkt.stationarity_residual},
        {"complementary_slackness", kkt.complementary_slackness_residual},
        {"primal_feasibility", kkt.primal_feasibility_residual},
        {"dual_feasibility", kkt.dual_feasibility_ok},
        {"pass", kkt_pass}}},
      {"disc_form", disc_form},
      {"margin_loss",
       {{"case_table_ok", cases_ok},
        {"nonnegative", nonneg_ok},
        {"loss_at_equality", loss_eq},
        {"loss_at_solution", loss_sol},
        {"pass", ebgan_pass}}},
      {"f_gan",
       {{"constant_at_equality", fgan_const_at_eq},
        {"nonconstant_at_distinct", fgan_distinct_ok},
        {"spread_at_solution", fgan_spread_sol},
        {"pass", fgan_pass}}},
      {"pass", pass},
  };
}

int cmd_tabular(const std::string& kind, std::size_t n, std::uint64_t seed,
                std::size_t n_seeds, std::string out_dir) {
  if (n < 2) throw ConfigError("--n must be >= 2");
  if (n_seeds < 1) throw ConfigError("--seeds must be >= 1");
  if (out_dir.empty()) out_dir = out_root() + "/tabular";

  json runs = json::array();
  bool all_pass = true;
  for (std::size_t i = 0; i < n_seeds; ++i) {
    json r = certify_tabular(kind, n, seed + i);
    const bool pass = r["pass"].get<bool>();
    all_pass = all_pass && pass;
    std::printf("%s  k=%s n=%zu seed=%llu  primal %.2e  kkt %.2e  %s\n",
                pass ? "PASS" : "FAIL", kind.c_str(), n,
                static_cast<unsigned long long>(seed + i),
                r["solver"]["primal_residual"].get<double>(),
                r["kkt"]["stationarity"].get<double>(),
                r["disc_form"]["check"].get<std::string>().c_str());
    runs.push_back(std::move(r));
  }

  fs::create_directories(out_dir);
  const json cert{{"runs", runs}, {"all_pass", all_pass}};
  io::write_file(out_dir + "/certification.json", cert.dump(2) + "\n");
  return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

void run_one_training(const train::TrainConfig& cfg, const fs::path& dir) {
  const auto started = std::chrono::system_clock::now();
  train::TrainResult res = train::train(cfg);

  fs::create_directories(dir);
  io::write_file((dir / "config.json").string(), train::config_json(cfg).dump(2) + "\n");
  io::write_file((dir / "report.json").string(), res.report.to_json().dump(2) + "\n");
  std::map<std::string, const nn::ParamSet*> nets{{"gen", &res.bundle.gen.params()},
                                                  {"disc", &res.bundle.disc.params()}};
  if (res.bundle.q.has_value()) nets.emplace("q", &res.bundle.q->params());
  io::save_checkpoint(nets, (dir / "checkpoint.bin").string(),
                      (dir / "checkpoint.json").string());
  io::write_grid_csv((dir / "energy.csv").string(), res.report.energy);
  io::write_grid_pgm((dir / "energy.pgm").string(), res.report.energy);
  io::write_samples_csv((dir / "samples.csv").string(), tensor_points(res.report.samples));

  // Timestamps and wall-clock live only here so the scientific outputs of
  // identically seeded runs stay byte-identical.
  const json meta{{"started_at", iso_time(started)},
                  {"finished_at", iso_time(std::chrono::system_clock::now())},
                  {"wall_seconds", res.report.wall_seconds}};
  io::write_file((dir / "meta.json").string(), meta.dump(2) + "\n");

  std::printf("%s: model=%s data=%s seed=%llu KL(gen||data)=%.4f KL(disc||data)=%.4f wall=%.0fs\n",
              dir.string().c_str(), train::model_name(cfg.model),
              synth::dataset_name(cfg.dataset),
              static_cast<unsigned long long>(cfg.seed), res.report.kl.gen_data,
              res.report.kl.disc_data, res.report.wall_seconds);
}

int cmd_train(const train::TrainConfig& cfg, std::size_t n_seeds, std::string out_dir) {
  if (n_seeds < 1) throw ConfigError("--seeds must be >= 1");
  if (out_dir.empty())
    out_dir = out_root() + "/train-" + train::model_name(cfg.model) + "-" +
              synth::dataset_name(cfg.dataset) + "-seed" + std::to_string(cfg.seed);

  if (n_seeds == 1) {
    run_one_training(cfg, out_dir);
    return 0;
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(n_seeds);
  for (std::size_t i = 0; i < n_seeds; ++i) {
    train::TrainConfig c = cfg;
    c.seed = cfg.seed + i;
    const fs::path sub = fs::path(out_dir) / ("seed-" + std::to_string(c.seed));
    workers.emplace_back([c, sub, &errors, i] {
      try {
        run_one_training(c, sub);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return 0;
}

// ---------------------------------------------------------------------------
// eval / export
// ---------------------------------------------------------------------------

train::ModelBundle load_run_bundle(const fs::path& dir) {
  const fs::path cfg_p = dir / "config.json";
  const fs::path bin_p = dir / "checkpoint.bin";
  const fs::path man_p = dir / "checkpoint.json";
  if (!fs::exists(cfg_p) || !fs::exists(bin_p) || !fs::exists(man_p))
    throw IoError("run directory incomplete (need config.json, checkpoint.bin, "
                  "checkpoint.json): " + dir.string());
  train::TrainConfig cfg;
  try {
    cfg = train::config_from_json(json::parse(io::read_file(cfg_p.string())));
  } catch (const json::exception& e) {
    throw IoError(cfg_p.string() + ": " + e.what());
  }
  train::ModelBundle b = train::make_bundle(cfg);
  std::map<std::string, nn::ParamSet*> nets{{"gen", &b.gen.params()},
                                            {"disc", &b.disc.params()}};
  if (b.q.has_value()) nets.emplace("q", &b.q->params());
  io::load_checkpoint(nets, bin_p.string(), man_p.string());
  return b;
}

int cmd_eval(const std::string& run_dir, const synth::Grid2D& spec, std::string out_dir) {
  if (out_dir.empty()) out_dir = run_dir;
  train::ModelBundle b = load_run_bundle(run_dir);
  const train::TrainConfig& cfg = b.config;
  const synth::GaussianMixture mix = synth::make_dataset(cfg.dataset);

  // Same derived streams as the in-training evaluation, so re-running eval on
  // an untouched run directory reproduces the table in report.json exactly.
  const synth::Grid2D energy = train::model_energy_grid(b, spec);
  const Tensor gen_big = train::generate_samples(b, 100000, derive_seed(cfg.seed, "eval.noise"));
  const auto data_big = synth::sample(mix, 100000, derive_seed(cfg.seed, "eval.data"));
  const eval::HistogramGrid p_data = eval::discretize_density(mix, spec);
  const eval::HistogramGrid p_emp = eval::histogram_estimate(data_big, spec);
  const eval::HistogramGrid p_gen = eval::histogram_estimate(gen_big, spec);
  const eval::HistogramGrid p_disc = eval::disc_distribution(energy);
  const eval::KlTable kl = eval::kl_table(p_data, p_emp, p_gen, p_disc);

  fs::create_directories(out_dir);
  io::write_file(out_dir + "/kl.json", kl.to_json().dump(2) + "\n");
  io::write_file(out_dir + "/kl.txt", kl.to_text());
  std::fputs(kl.to_text().c_str(), stdout);
  return 0;
}

int cmd_export(const std::string& what, const std::string& run_dir,
               const std::string& data_name, std::size_t count,
               const synth::Grid2D& spec, std::string out_dir) {
  if (what == "truth") {
    synth::DatasetKind kind;
    if (!data_name.empty()) {
      kind = synth::parse_dataset(data_name);
    } else if (!run_dir.empty()) {
      train::ModelBundle b = load_run_bundle(run_dir);
      kind = b.config.dataset;
    } else {
      throw ConfigError("export truth needs --data or a run directory");
    }
    if (out_dir.empty())
      out_dir = run_dir.empty() ? out_root() + "/truth-" + synth::dataset_name(kind)
                                : run_dir;
    const synth::Grid2D g = synth::true_energy_grid(synth::make_dataset(kind), spec);
    fs::create_directories(out_dir);
    io::write_grid_csv(out_dir + "/truth.csv", g);
    io::write_grid_pgm(out_dir + "/truth.pgm", g);
    std::printf("%s/truth.{csv,pgm}: %zux%zu grid\n", out_dir.c_str(), g.nx, g.ny);
    return 0;
  }

  if (run_dir.empty()) throw ConfigError("export " + what + " needs a run directory");
  train::ModelBundle b = load_run_bundle(run_dir);
  if (out_dir.empty()) out_dir = run_dir;
  fs::create_directories(out_dir);

  if (what == "energy") {
    const synth::Grid2D g = train::model_energy_grid(b, spec);
    io::write_grid_csv(out_dir + "/energy.csv", g);
    io::write_grid_pgm(out_dir + "/energy.pgm", g);
    std::printf("%s/energy.{csv,pgm}: %zux%zu grid\n", out_dir.c_str(), g.nx, g.ny);
  } else if (what == "samples") {
    const std::size_t n = count ? count : 1000;
    const Tensor s =
        train::generate_samples(b, n, derive_seed(b.config.seed, "report.samples"));
    io::write_samples_csv(out_dir + "/samples.csv", tensor_points(s));
    std::printf("%s/samples.csv: %zu rows\n", out_dir.c_str(), n);
  } else if (what == "gradfield") {
    const std::size_t n = count ? count : 512;
    Rng rng(derive_seed(b.config.seed, "gradfield"));
    const Tensor z = train::sample_noise(n, b.config.z_dim, rng);
    const auto recs = eval::gradient_field_report(b, z);
    io::write_gradfield_csv(out_dir + "/gradfield.csv", recs);
    std::printf("%s/gradfield.csv: %zu rows\n", out_dir.c_str(), n);
  } else {
    throw ConfigError("unknown export target '" + what +
                      "' (expected energy | samples | gradfield | truth)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"energy-calibrated adversarial training on 2D synthetic data"};
  app.require_subcommand(1);

  auto* tab = app.add_subcommand("tabular", "solve and certify the finite-space game");
  std::string tab_kind = "neg-entropy";
  std::size_t tab_n = 8, tab_seeds = 1;
  std::uint64_t tab_seed = 1;
  std::string tab_out;
  tab->add_option("--k", tab_kind, "regularizer: neg-entropy | half-l2 | constant");
  tab->add_option("--n", tab_n, "number of points in the finite space");
  tab->add_option("--seed", tab_seed, "base seed");
  tab->add_option("--seeds", tab_seeds, "number of consecutive seeds to certify");
  tab->add_option("-o,--out", tab_out, "output directory");

  auto* tr = app.add_subcommand("train", "train a model and write the run directory");
  std::string tr_config, tr_model, tr_data, tr_out;
  std::vector<std::string> tr_sets;
  std::size_t tr_zdim = 0, tr_batch = 0, tr_iters = 0, tr_knn = 0, tr_every = 0,
              tr_seeds = 1;
  double tr_lr = 0, tr_lr_disc = 0, tr_alpha = 0, tr_entw = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--set", tr_sets, "config override key=value (repeatable)");
  tr->add_option("--model", tr_model, "gan | egan-const | egan-ent-nn | egan-ent-vi");
  tr->add_option("--data", tr_data, "mog4 | biased-mog2 | two-spirals");
  tr->add_option("--z-dim", tr_zdim, "latent dimension");
  tr->add_option("--batch", tr_batch, "batch size");
  tr->add_option("--iterations", tr_iters, "training iterations");
  tr->add_option("--lr", tr_lr, "Adam learning rate (generator side)");
  tr->add_option("--lr-disc", tr_lr_disc, "discriminator learning rate");
  tr->add_option("--knn-k", tr_knn, "neighbor count for the entropy gradient");
  tr->add_option("--alpha", tr_alpha, "entropy gradient scale");
  tr->add_option("--entropy-weight", tr_entw, "weight of the variational bound");
  tr->add_option("--seed", tr_seed, "run seed");
  tr->add_option("--eval-every", tr_every, "loss curve cadence");
  tr->add_option("--seeds", tr_seeds, "fan out this many consecutive seeds");
  tr->add_option("-o,--out", tr_out, "output directory");

  auto* ev = app.add_subcommand("eval", "recompute the KL table for a finished run");
  std::string ev_run, ev_out;
  synth::Grid2D ev_spec = synth::Grid2D::default_spec();
  ev->add_option("run_dir", ev_run, "run directory")->required();
  ev->add_option("-o,--out", ev_out, "output directory (default: the run directory)");
  ev->add_option("--x-min", ev_spec.x_min, "grid x lower edge");
  ev->add_option("--x-max", ev_spec.x_max, "grid x upper edge");
  ev->add_option("--y-min", ev_spec.y_min, "grid y lower edge");
  ev->add_option("--y-max", ev_spec.y_max, "grid y upper edge");
  ev->add_option("--nx", ev_spec.nx, "grid cells in x");
  ev->add_option("--ny", ev_spec.ny, "grid cells in y");

  auto* ex = app.add_subcommand("export", "write CSV/PGM artifacts");
  std::string ex_what, ex_run, ex_data, ex_out;
  std::size_t ex_count = 0;
  ex->add_option("what", ex_what, "energy | samples | gradfield | truth")->required();
  ex->add_option("run_dir", ex_run, "run directory");
  ex->add_option("--data", ex_data, "dataset for truth export without a run");
  ex->add_option("--count", ex_count, "rows for samples/gradfield export");
  ex->add_option("-o,--out", ex_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*tab) return cmd_tabular(tab_kind, tab_n, tab_seed, tab_seeds, tab_out);
    if (*tr) {
      train::TrainConfig cfg;
      if (!tr_config.empty())
        for (const auto& [k, v] : parse_kv_file(tr_config)) apply_kv(cfg, k, v);
      for (const auto& s : tr_sets) {
        const auto [k, v] = split_override(s);
        apply_kv(cfg, k, v);
      }
      if (tr->count("--model")) cfg.model = train::parse_model(tr_model);
      if (tr->count("--data")) cfg.dataset = synth::parse_dataset(tr_data);
      if (tr->count("--z-dim")) cfg.z_dim = tr_zdim;
      if (tr->count("--batch")) cfg.batch = tr_batch;
      if (tr->count("--iterations")) cfg.iterations = tr_iters;
      if (tr->count("--lr")) cfg.adam.lr = tr_lr;
      if (tr->count("--lr-disc")) cfg.lr_disc = tr_lr_disc;
      if (tr->count("--knn-k")) cfg.knn_k = tr_knn;
      if (tr->count("--alpha")) cfg.alpha = tr_alpha;
      if (tr->count("--entropy-weight")) cfg.entropy_weight = tr_entw;
      if (tr->count("--seed")) cfg.seed = tr_seed;
      if (tr->count("--eval-every")) cfg.eval_every = tr_every;
      cfg.validate();
      return cmd_train(cfg, tr_seeds, tr_out);
    }
    if (*ev) {
      ev_spec.validate_spec();
      return cmd_eval(ev_run, ev_spec, ev_out);
    }
    if (*ex) {
      const synth::Grid2D spec = synth::Grid2D::default_spec();
      return cmd_export(ex_what, ex_run, ex_data, ex_count, spec, ex_out);
    }
  } catch (const NonFinite& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
