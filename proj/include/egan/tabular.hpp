#pragma once

// Exact finite-space instantiation of the cost-gap minimax game
//
//   max_c min_{p in simplex}  E_{x~p}[c(x)] - E_{x~p_data}[c(x)] + K(p)
//
// for a convex calibrating term K, together with numerical certification of
// the closed-form optima: the optimal cost function equals
// -dK/dp(x)|_{p_data} - lambda + mu(x), so the choice of K decides what
// density information the converged cost retains.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <variant>
#include <vector>

#include "egan/errors.hpp"
#include "egan/simplex.hpp"
#include "egan/rng.hpp"

namespace egan::tabular {

struct NegEntropy {};
struct HalfL2 {};
struct ConstantReg {
  double value = 0.0;
};

/// The calibrating term K(p_gen): negative entropy, half squared l2 norm, or
/// a constant (the degenerate case with no extra generator signal).
using Regularizer = std::variant<NegEntropy, HalfL2, ConstantReg>;

/// Dual variables of the equality-constrained projection problem: a global
/// bias shared by every point and a nonnegative support multiplier that must
/// vanish wherever the data distribution has mass.
struct DualVars {
  double lambda = 0.0;
  std::vector<double> mu;
};

struct KktReport {
  double stationarity_residual = 0.0;
  double complementary_slackness_residual = 0.0;
  double primal_feasibility_residual = 0.0;
  bool dual_feasibility_ok = true;

  bool all_within(double tol) const {
    return dual_feasibility_ok && stationarity_residual < tol &&
           complementary_slackness_residual < tol &&
           primal_feasibility_residual < tol;
  }
};

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": size " << a << " vs " << b;
    throw DimensionMismatch(os.str());
  }
}
}  // namespace detail

// ---------------------------------------------------------------------------
// regularizer
// ---------------------------------------------------------------------------

/// K(p). Negative entropy uses the 0*log(0) := 0 convention.
inline double regularizer_value(const Regularizer& kind, const Simplex& p) {
  return std::visit(
      [&](auto&& k) -> double {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, NegEntropy>) {
          double s = 0.0;
          for (double v : p.probs)
            if (v > 0.0) s += v * std::log(v);
          return s;
        } else if constexpr (std::is_same_v<T, HalfL2>) {
          double s = 0.0;
          for (double v : p.probs) s += v * v;
          return 0.5 * s;
        } else {
          return k.value;
        }
      },
      kind);
}

/// dK/dp(x). For negative entropy this is log p(x) + 1, which diverges at
/// p(x) = 0; the plain overload throws there.
inline std::vector<double> regularizer_grad(const Regularizer& kind, const Simplex& p) {
  return std::visit(
      [&](auto&& k) -> std::vector<double> {
        using T = std::decay_t<decltype(k)>;
        std::vector<double> g(p.size(), 0.0);
        if constexpr (std::is_same_v<T, NegEntropy>) {
          for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] <= 0.0)
              throw ZeroProbabilityEntropy(
                  "regularizer_grad: entropy gradient diverges at p(x) = 0");
            g[i] = std::log(p[i]) + 1.0;
          }
        } else if constexpr (std::is_same_v<T, HalfL2>) {
          g = p.probs;
        }
        (void)k;
        return g;
      },
      kind);
}

struct SentinelGrad {
  std::vector<double> values;      // -inf at zero-probability entropy points
  std::vector<bool> is_infinite;   // flags those entries
};

/// Same as regularizer_grad but reports divergent entropy entries as an
/// infinite sentinel instead of throwing.
inline SentinelGrad regularizer_grad_sentinel(const Regularizer& kind, const Simplex& p) {
  SentinelGrad out;
  out.is_infinite.assign(p.size(), false);
  if (std::holds_alternative<NegEntropy>(kind)) {
    out.values.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] <= 0.0) {
        out.values[i] = -std::numeric_limits<double>::infinity();
        out.is_infinite[i] = true;
      } else {
        out.values[i] = std::log(p[i]) + 1.0;
      }
    }
  } else {
    out.values = regularizer_grad(kind, p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// objective and closed-form optimum
// ---------------------------------------------------------------------------

/// L(p_gen, c) = E_{p_gen}[c] - E_{p_data}[c] + K(p_gen).
inline double lagrangian(const Simplex& p_gen, const CostVector& c,
                         const Simplex& p_data, const Regularizer& kind) {
  detail::require_same_size(p_gen.size(), c.size(), "lagrangian");
  detail::require_same_size(p_data.size(), c.size(), "lagrangian");
  double gap = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) gap += (p_gen[i] - p_data[i]) * c[i];
  return gap + regularizer_value(kind, p_gen);
}

/// c*(x) = -dK/dp(x)|_{p_data} - lambda + mu(x). With K = -H this is the
/// energy -log p_data(x) - 1 (up to the duals); with K = l2/2 it is
/// -p_data(x); with K constant the cost carries no density information.
inline CostVector optimal_discriminator(const Regularizer& kind, const Simplex& p_data,
                                        const DualVars& dual) {
  detail::require_same_size(p_data.size(), dual.mu.size(), "optimal_discriminator");
  for (std::size_t i = 0; i < p_data.size(); ++i) {
    if (dual.mu[i] < 0.0)
      throw InvalidDuals("optimal_discriminator: mu(x) must be nonnegative");
    if (p_data[i] > 0.0 && dual.mu[i] != 0.0)
      throw InvalidDuals("optimal_discriminator: mu(x) must vanish on the data support");
  }
  const SentinelGrad g = regularizer_grad_sentinel(kind, p_data);
  CostVector c;
  c.costs.resize(p_data.size());
  for (std::size_t i = 0; i < p_data.size(); ++i)
    c.costs[i] = -g.values[i] - dual.lambda + dual.mu[i];
  return c;
}

// ---------------------------------------------------------------------------
// numerical saddle-point solver
// ---------------------------------------------------------------------------

struct MinimaxResult {
  Simplex p_gen;
  CostVector cost;
  /// max_x |p_gen(x) - p_data(x)| at the returned state.
  double primal_residual = 0.0;
  /// Standard deviation over the support of c(x) + dK/dp(x); zero at a
  /// saddle point, where the stationarity combination is a constant.
  double stationarity_spread = 0.0;
  bool converged = false;
};

/// Solves the minimax game by simultaneous constant-rate updates: mirror
/// descent on the generator (free logits, normalized-exponential map, so
/// feasibility is structural) and ascent on the cost along its subgradient
/// p_gen - p_data. Both sides use the optimistic step 2*g_t - g_{t-1}; with
/// a constant K the game is bilinear and the plain simultaneous iteration
/// spirals outward, while the optimistic one has the same fixed point (the
/// KKT saddle) and converges in all three regularizer cases.
inline MinimaxResult solve_minimax(const Regularizer& kind, const Simplex& p_data,
                                   std::size_t steps, double primal_lr, double dual_lr,
                                   std::uint64_t seed) {
  if (steps < 1) throw Error("solve_minimax: steps must be >= 1");
  if (!(primal_lr > 0.0) || !(dual_lr > 0.0))
    throw Error("solve_minimax: learning rates must be positive");
  const std::size_t n = p_data.size();

  Rng rng(seed);
  std::vector<double> logits(n), c(n);
  for (auto& v : logits) v = rng.uniform(-0.1, 0.1);
  for (auto& v : c) v = rng.uniform(-0.1, 0.1);

  std::vector<double> p(n), grad(n), prev_grad(n), dual_g(n), prev_dual_g(n);
  double lse = 0.0;
  auto softmax_into = [&](const std::vector<double>& lg, std::vector<double>& out) {
    const double m = *std::max_element(lg.begin(), lg.end());
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(lg[i] - m);
      z += out[i];
    }
    for (auto& v : out) v /= z;
    lse = m + std::log(z);
  };

  for (std::size_t t = 0; t < steps; ++t) {
    softmax_into(logits, p);
    assert(Simplex{p}.valid());
    // dL/dp(x) = c(x) + dK/dp(x). log p comes from logits - logsumexp, which
    // stays finite even when the softmax output underflows to zero.
    for (std::size_t i = 0; i < n; ++i) grad[i] = c[i];
    std::visit(
        [&](auto&& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, NegEntropy>) {
            for (std::size_t i = 0; i < n; ++i) grad[i] += (logits[i] - lse) + 1.0;
          } else if constexpr (std::is_same_v<T, HalfL2>) {
            for (std::size_t i = 0; i < n; ++i) grad[i] += p[i];
          }
          (void)k;
        },
        kind);
    for (std::size_t i = 0; i < n; ++i) dual_g[i] = p[i] - p_data[i];
    if (t == 0) {
      prev_grad = grad;
      prev_dual_g = dual_g;
    }
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      logits[i] -= primal_lr * (2.0 * grad[i] - prev_grad[i]);
      shift = std::max(shift, logits[i]);
    }
    for (auto& v : logits) v -= shift;  // renormalize; softmax is shift-invariant
    for (std::size_t i = 0; i < n; ++i) c[i] += dual_lr * (2.0 * dual_g[i] - prev_dual_g[i]);
    prev_grad.swap(grad);
    prev_dual_g.swap(dual_g);
  }

  MinimaxResult res;
  softmax_into(logits, p);
  res.p_gen = Simplex{p};
  res.cost = CostVector{c};
  for (std::size_t i = 0; i < n; ++i)
    res.primal_residual = std::max(res.primal_residual, std::abs(p[i] - p_data[i]));
  // spread of c + dK/dp over the support of p_data
  double mean = 0.0, m2 = 0.0;
  std::size_t support = 0;
  const SentinelGrad g = regularizer_grad_sentinel(kind, res.p_gen);
  for (std::size_t i = 0; i < n; ++i) {
    if (p_data[i] <= 0.0) continue;
    const double s = c[i] + g.values[i];
    ++support;
    const double d = s - mean;
    mean += d / static_cast<double>(support);
    m2 += d * (s - mean);
  }
  res.stationarity_spread = support > 1 ? std::sqrt(m2 / static_cast<double>(support)) : 0.0;
  res.converged = res.primal_residual < 1e-3;
  return res;
}

// ---------------------------------------------------------------------------
// KKT certification
// ---------------------------------------------------------------------------

/// Certifies a candidate saddle (p_gen, c) against the KKT system. The
/// under-determined duals are canonicalized first: lambda by least squares on
/// the stationarity equation over the data support (where mu must vanish),
/// mu off support as the nonnegative part of the stationarity residual.
/// Residuals are max norms; a poor candidate yields large residuals, never an
/// exception.
inline KktReport verify_kkt(const Simplex& p_gen, const CostVector& c,
                            const Regularizer& kind, const Simplex& p_data,
                            double /*tol*/ = 1e-8) {
  detail::require_same_size(p_gen.size(), c.size(), "verify_kkt");
  detail::require_same_size(p_data.size(), c.size(), "verify_kkt");
  const std::size_t n = c.size();
  const SentinelGrad g = regularizer_grad_sentinel(kind, p_gen);

  double lambda_acc = 0.0;
  std::size_t support = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (p_data[i] > 0.0 && !g.is_infinite[i]) {
      lambda_acc += -(g.values[i] + c[i]);
      ++support;
    }
  }
  const double lambda = support > 0 ? lambda_acc / static_cast<double>(support) : 0.0;

  KktReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    const double resid = g.values[i] + c[i] + lambda;  // == mu(x) at optimality
    double mu = 0.0;
    if (p_data[i] <= 0.0 && !g.is_infinite[i]) mu = std::max(0.0, resid);
    if (!g.is_infinite[i]) {
      rep.stationarity_residual =
          std::max(rep.stationarity_residual, std::abs(resid - mu));
    }
    rep.complementary_slackness_residual =
        std::max(rep.complementary_slackness_residual, std::abs(mu * p_gen[i]));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rep.primal_feasibility_residual =
        std::max(rep.primal_feasibility_residual, std::abs(p_gen[i] - p_data[i]));
    rep.primal_feasibility_residual =
        std::max(rep.primal_feasibility_residual, std::max(0.0, -p_gen[i]));
    sum += p_gen[i];
  }
  rep.primal_feasibility_residual =
      std::max(rep.primal_feasibility_residual, std::abs(sum - 1.0));
  rep.dual_feasibility_ok = true;  // mu is constructed nonnegative
  return rep;
}

// ---------------------------------------------------------------------------
// margin-loss (EBGAN-style) and f-divergence analyses
// ---------------------------------------------------------------------------

/// Optimal margin-loss discriminator per point: cost 0 where the generator
/// puts less mass than the data, the margin m where it puts more, and fully
/// under-determined where the two agree.
enum class MarginDiscCase : std::uint8_t { Zero, Margin, Undetermined };

inline std::vector<MarginDiscCase> ebgan_optimal_disc(const Simplex& p_gen,
                                                      const Simplex& p_data,
                                                      double m) {
  if (!(m > 0.0)) throw Error("ebgan_optimal_disc: margin must be positive");
  detail::require_same_size(p_gen.size(), p_data.size(), "ebgan_optimal_disc");
  std::vector<MarginDiscCase> out(p_gen.size());
  for (std::size_t i = 0; i < p_gen.size(); ++i) {
    if (p_gen[i] < p_data[i])
      out[i] = MarginDiscCase::Zero;
    else if (p_gen[i] > p_data[i])
      out[i] = MarginDiscCase::Margin;
    else
      out[i] = MarginDiscCase::Undetermined;
  }
  return out;
}

/// Generator objective value under the per-generator-optimal margin
/// discriminator: m * sum over the greater-than set of (p_gen - p_data).
/// Nonnegative, and zero exactly at p_gen = p_data, which is why the margin
/// objective certifies the generator but leaves the cost degenerate.
inline double ebgan_generator_loss(const Simplex& p_gen, const Simplex& p_data,
                                   double m) {
  if (!(m > 0.0)) throw Error("ebgan_generator_loss: margin must be positive");
  detail::require_same_size(p_gen.size(), p_data.size(), "ebgan_generator_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < p_gen.size(); ++i)
    if (p_gen[i] > p_data[i]) s += p_gen[i] - p_data[i];
  return m * s;
}

/// Variational f-divergence optimum: c*(x) = f'(p_data(x) / p_gen(x)). The
/// cost is a fixed function of the density ratio, so it can only be constant
/// when the two distributions coincide; retaining density information and
/// matching the data are mutually exclusive here.
inline CostVector fgan_optimal_disc(const std::function<double(double)>& f_prime,
                                    const Simplex& p_data, const Simplex& p_gen) {
  detail::require_same_size(p_data.size(), p_gen.size(), "fgan_optimal_disc");
  CostVector c;
  c.costs.resize(p_data.size());
  for (std::size_t i = 0; i < p_data.size(); ++i) {
    double ratio;
    if (p_gen[i] == 0.0) {
      if (p_data[i] > 0.0)
        throw DivisionByZeroSupport(
            "fgan_optimal_disc: p_gen(x) = 0 on the data support");
      ratio = 1.0;  // both vanish: neutral ratio
    } else {
      ratio = p_data[i] / p_gen[i];
    }
    c.costs[i] = f_prime(ratio);
  }
  return c;
}

/// f'(u) = log u + 1, the KL-divergence generator function.
inline double kl_f_prime(double u) { return std::log(u) + 1.0; }

}  // namespace egan::tabular
