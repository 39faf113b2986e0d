#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <vector>

#include "egan/tabular.hpp"

using namespace egan;
using namespace egan::tabular;
using Catch::Approx;

namespace {

Simplex S(std::initializer_list<double> v) { return Simplex::from(std::vector<double>(v)); }

double spread(const std::vector<double>& v) {
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double m2 = 0.0;
  for (double x : v) m2 += (x - mean) * (x - mean);
  return std::sqrt(m2 / v.size());
}

}  // namespace

TEST_CASE("simplex validation", "[tabular]") {
  CHECK(Simplex::uniform(4).valid());
  CHECK(S({0.9, 0.1}).valid());
  CHECK_THROWS_AS(Simplex::from({0.5, 0.6}), Error);
  CHECK_THROWS_AS(Simplex::from({1.2, -0.2}), Error);

  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    auto s = Simplex::random_full_support(2 + t % 15, rng);
    REQUIRE(s.valid());
    for (double p : s.probs) REQUIRE(p >= 1e-3);
  }
}

TEST_CASE("regularizer values", "[tabular]") {
  CHECK(regularizer_value(NegEntropy{}, Simplex::uniform(4)) == Approx(-1.3862943611198906));
  CHECK(regularizer_value(HalfL2{}, Simplex::uniform(4)) == Approx(0.125));
  CHECK(regularizer_value(ConstantReg{7.5}, Simplex::uniform(3)) == 7.5);
  // 0 log 0 convention: a degenerate point mass has zero entropy
  CHECK(regularizer_value(NegEntropy{}, S({1.0, 0.0})) == 0.0);
}

TEST_CASE("regularizer gradients", "[tabular]") {
  auto g = regularizer_grad(NegEntropy{}, S({0.9, 0.1}));
  CHECK(g[0] == Approx(0.8946394843421737));
  CHECK(g[1] == Approx(-1.3025850929940455));

  g = regularizer_grad(NegEntropy{}, S({0.5, 0.5}));
  CHECK(g[0] == Approx(0.3068528194400547));
  CHECK(g[1] == Approx(0.3068528194400547));

  g = regularizer_grad(HalfL2{}, S({0.25, 0.25, 0.5}));
  CHECK(g[0] == Approx(0.25));
  CHECK(g[2] == Approx(0.5));

  g = regularizer_grad(ConstantReg{3.0}, Simplex::uniform(5));
  for (double v : g) CHECK(v == 0.0);

  CHECK_THROWS_AS(regularizer_grad(NegEntropy{}, S({1.0, 0.0})), ZeroProbabilityEntropy);

  auto sg = regularizer_grad_sentinel(NegEntropy{}, S({1.0, 0.0}));
  CHECK_FALSE(sg.is_infinite[0]);
  CHECK(sg.is_infinite[1]);
  CHECK(std::isinf(sg.values[1]));
  CHECK(sg.values[1] < 0);
}

TEST_CASE("lagrangian", "[tabular]") {
  auto p = S({0.9, 0.1});
  CHECK(lagrangian(p, CostVector{{4.0, -2.0}}, p, ConstantReg{0.0}) == Approx(0.0).margin(1e-15));
  auto u = Simplex::uniform(2);
  CHECK(lagrangian(u, CostVector{{1.0, 1.0}}, u, NegEntropy{}) == Approx(-0.6931471805599453));
  CHECK(lagrangian(S({1.0, 0.0}), CostVector{{2.0, 5.0}}, S({0.0, 1.0}), ConstantReg{0.0}) ==
        Approx(-3.0));
  CHECK(lagrangian(S({0.5, 0.5}), CostVector{{1.0, 2.0}}, S({0.9, 0.1}), NegEntropy{}) ==
        Approx(-0.29314718055994526));
  CHECK_THROWS_AS(lagrangian(Simplex::uniform(3), CostVector{{1.0, 2.0}}, u, NegEntropy{}),
                  DimensionMismatch);
}

TEST_CASE("cancel-out identity holds for every cost", "[tabular]") {
  Rng rng(11);
  for (int t = 0; t < 30; ++t) {
    auto p = Simplex::random_full_support(6, rng);
    CostVector c;
    for (int i = 0; i < 6; ++i) c.costs.push_back(rng.normal(0, 10));
    CHECK(lagrangian(p, c, p, ConstantReg{0.0}) == Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("optimal discriminator closed forms", "[tabular]") {
  DualVars zero{0.0, {0.0, 0.0}};

  auto c = optimal_discriminator(NegEntropy{}, S({0.9, 0.1}), zero);
  CHECK(c[0] == Approx(-0.8946394843421737));
  CHECK(c[1] == Approx(1.3025850929940455));

  c = optimal_discriminator(HalfL2{}, S({0.9, 0.1}), zero);
  CHECK(c[0] == Approx(-0.9));
  CHECK(c[1] == Approx(-0.1));

  c = optimal_discriminator(ConstantReg{0.0}, S({0.9, 0.1}), zero);
  CHECK(c[0] == 0.0);
  CHECK(c[1] == 0.0);

  // duals shift the cost: -lambda everywhere, +mu off support
  DualVars d{2.0, {0.0, 0.5}};
  c = optimal_discriminator(HalfL2{}, S({1.0, 0.0}), d);
  CHECK(c[0] == Approx(-1.0 - 2.0));
  CHECK(c[1] == Approx(0.0 - 2.0 + 0.5));

  CHECK_THROWS_AS(optimal_discriminator(HalfL2{}, S({0.9, 0.1}), DualVars{0.0, {0.0, -0.1}}),
                  InvalidDuals);
  CHECK_THROWS_AS(optimal_discriminator(HalfL2{}, S({0.9, 0.1}), DualVars{0.0, {0.1, 0.0}}),
                  InvalidDuals);
}

TEST_CASE("solver recovers the data energy in the entropy case", "[tabular]") {
  auto res = solve_minimax(NegEntropy{}, S({0.9, 0.1}), 20000, 0.5, 0.5, 42);
  CHECK(res.converged);
  CHECK(res.p_gen[0] == Approx(0.9).margin(1e-3));
  CHECK(res.p_gen[1] == Approx(0.1).margin(1e-3));
  CHECK(res.cost[1] - res.cost[0] == Approx(2.1972245773362196).margin(1e-2));
}

TEST_CASE("solver recovers negative probability in the l2 case", "[tabular]") {
  auto res = solve_minimax(HalfL2{}, S({0.25, 0.25, 0.5}), 20000, 0.5, 0.5, 42);
  CHECK(res.primal_residual < 1e-3);
  CHECK(res.cost[0] - res.cost[2] == Approx(0.25).margin(1e-2));
  CHECK(res.cost[1] - res.cost[2] == Approx(0.25).margin(1e-2));
  CHECK(res.cost[0] - res.cost[1] == Approx(0.0).margin(1e-2));
}

TEST_CASE("solver matches the data but leaves cost unconstrained in the constant case",
          "[tabular]") {
  auto res = solve_minimax(ConstantReg{0.0}, Simplex::uniform(4), 20000, 0.5, 0.5, 42);
  for (int i = 0; i < 4; ++i) CHECK(res.p_gen[i] == Approx(0.25).margin(1e-3));
}

TEST_CASE("solver converges on random full-support targets", "[tabular][slow]") {
  Rng rng(123);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 2 + rng.next_u64() % 15;
    auto p_data = Simplex::random_full_support(n, rng);
    for (int which = 0; which < 2; ++which) {
      Regularizer kind = which == 0 ? Regularizer{NegEntropy{}} : Regularizer{HalfL2{}};
      auto res = solve_minimax(kind, p_data, 20000, 0.5, 0.5, 1000 + t);
      INFO("n=" << n << " kind=" << which);
      REQUIRE(res.primal_residual < 1e-3);
      // cost matches the closed form up to a constant shift
      auto form = optimal_discriminator(kind, p_data, DualVars{0.0, std::vector<double>(n, 0.0)});
      std::vector<double> diff(n);
      for (std::size_t i = 0; i < n; ++i) diff[i] = res.cost[i] - form[i];
      REQUIRE(spread(diff) < 1e-2);
    }
  }
}

TEST_CASE("exact optima certify to machine precision", "[tabular]") {
  for (auto kind : {Regularizer{NegEntropy{}}, Regularizer{HalfL2{}}, Regularizer{ConstantReg{0.0}}}) {
    auto p = S({0.9, 0.1});
    auto c = optimal_discriminator(kind, p, DualVars{0.7, {0.0, 0.0}});
    auto rep = verify_kkt(p, c, kind, p, 1e-8);
    CHECK(rep.stationarity_residual < 1e-10);
    CHECK(rep.complementary_slackness_residual < 1e-10);
    CHECK(rep.primal_feasibility_residual < 1e-10);
    CHECK(rep.dual_feasibility_ok);
    CHECK(rep.all_within(1e-10));
  }
}

TEST_CASE("off-support optimum certifies when mu is admissible", "[tabular]") {
  // point mass on x1; mu may be anything nonnegative off support
  auto p = S({1.0, 0.0});
  auto c = optimal_discriminator(HalfL2{}, p, DualVars{0.3, {0.0, 2.0}});
  auto rep = verify_kkt(p, c, HalfL2{}, p, 1e-8);
  CHECK(rep.all_within(1e-10));
}

TEST_CASE("certifier flags a mismatched generator", "[tabular]") {
  auto rep = verify_kkt(S({0.5, 0.5}), CostVector{{0.0, 0.0}}, ConstantReg{0.0},
                        S({0.9, 0.1}), 1e-8);
  CHECK(rep.primal_feasibility_residual >= 0.4);
}

TEST_CASE("certifier is invariant to constant cost shifts", "[tabular]") {
  auto p = S({0.3, 0.2, 0.5});
  auto c = optimal_discriminator(NegEntropy{}, p, DualVars{0.0, {0.0, 0.0, 0.0}});
  for (auto& v : c.costs) v += 17.25;  // absorbed by lambda
  auto rep = verify_kkt(p, c, NegEntropy{}, p, 1e-8);
  CHECK(rep.all_within(1e-10));
}

TEST_CASE("solver output certifies", "[tabular]") {
  Rng rng(5);
  auto p_data = Simplex::random_full_support(8, rng);
  auto res = solve_minimax(NegEntropy{}, p_data, 20000, 0.5, 0.5, 99);
  auto rep = verify_kkt(res.p_gen, res.cost, NegEntropy{}, p_data, 1e-2);
  CHECK(rep.stationarity_residual < 1e-2);
  CHECK(rep.complementary_slackness_residual < 1e-2);
  CHECK(rep.primal_feasibility_residual < 1e-2);
  CHECK(rep.dual_feasibility_ok);
}

TEST_CASE("margin discriminator case table", "[tabular]") {
  using M = MarginDiscCase;
  auto cases = ebgan_optimal_disc(S({0.7, 0.3}), S({0.5, 0.5}), 1.0);
  CHECK(cases[0] == M::Margin);
  CHECK(cases[1] == M::Zero);

  cases = ebgan_optimal_disc(S({0.5, 0.5}), S({0.5, 0.5}), 2.0);
  CHECK(cases[0] == M::Undetermined);
  CHECK(cases[1] == M::Undetermined);

  cases = ebgan_optimal_disc(S({0.0, 1.0}), S({1.0, 0.0}), 1.0);
  CHECK(cases[0] == M::Zero);
  CHECK(cases[1] == M::Margin);

  CHECK_THROWS_AS(ebgan_optimal_disc(S({0.5, 0.5}), S({0.5, 0.5}), 0.0), Error);
}

TEST_CASE("margin generator loss", "[tabular]") {
  CHECK(ebgan_generator_loss(S({0.7, 0.3}), S({0.5, 0.5}), 1.0) == Approx(0.2));
  CHECK(ebgan_generator_loss(S({0.5, 0.5}), S({0.5, 0.5}), 3.0) == 0.0);
  CHECK(ebgan_generator_loss(S({0.6, 0.3, 0.1}), S({0.4, 0.4, 0.2}), 2.0) == Approx(0.4));
}

TEST_CASE("margin generator loss is nonnegative, zero only at the data", "[tabular]") {
  // exhaustive over a coarse 3-point simplex grid (step 0.05)
  const int steps = 20;
  auto grid_pt = [&](int i, int j) {
    return Simplex::from({i / double(steps), j / double(steps), (steps - i - j) / double(steps)});
  };
  auto p_data = grid_pt(8, 6);  // (0.4, 0.3, 0.3)
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j + i <= steps; ++j) {
      auto p_gen = grid_pt(i, j);
      const double loss = ebgan_generator_loss(p_gen, p_data, 2.0);
      REQUIRE(loss >= 0.0);
      const bool equal = (i == 8 && j == 6);
      if (equal)
        REQUIRE(loss == 0.0);
      else
        REQUIRE(loss > 0.0);
    }
  }
}

TEST_CASE("density-ratio discriminator", "[tabular]") {
  auto p = S({0.3, 0.7});
  auto c = fgan_optimal_disc(kl_f_prime, p, p);
  CHECK(c[0] == Approx(1.0));
  CHECK(c[1] == Approx(1.0));

  c = fgan_optimal_disc(kl_f_prime, S({0.9, 0.1}), S({0.5, 0.5}));
  CHECK(c[0] == Approx(1.587786664902119));
  CHECK(c[1] == Approx(-0.6094379124341003));

  auto pearson = [](double u) { return u - 1.0; };
  c = fgan_optimal_disc(pearson, S({2.0 / 3.0, 1.0 / 3.0}), S({1.0 / 3.0, 2.0 / 3.0}));
  CHECK(c[0] == Approx(1.0));   // ratio 2
  CHECK(c[1] == Approx(-0.5));  // ratio 0.5

  CHECK_THROWS_AS(fgan_optimal_disc(kl_f_prime, S({0.5, 0.5}), S({1.0, 0.0})),
                  DivisionByZeroSupport);
  // both measures vanish at a point: neutral ratio, no throw
  c = fgan_optimal_disc(kl_f_prime, S({1.0, 0.0}), S({1.0, 0.0}));
  CHECK(c[1] == Approx(1.0));
}

TEST_CASE("ratio discriminator is flat only when distributions match", "[tabular]") {
  Rng rng(77);
  for (int t = 0; t < 40; ++t) {
    auto p_data = Simplex::random_full_support(5, rng);
    auto p_gen = Simplex::random_full_support(5, rng);
    auto c = fgan_optimal_disc(kl_f_prime, p_data, p_gen);
    const double sp = spread(c.costs);
    CHECK(sp > 1e-6);  // generically non-constant
    auto flat = fgan_optimal_disc(kl_f_prime, p_data, p_data);
    CHECK(spread(flat.costs) < 1e-14);
  }
}
