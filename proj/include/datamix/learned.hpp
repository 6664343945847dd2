#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "datamix/errors.hpp"
#include "datamix/mixcore.hpp"
#include "datamix/optimizer.hpp"
#include "datamix/rng.hpp"

namespace datamix {

// ---------------------------------------------------------------------------
// DoReMi
// ---------------------------------------------------------------------------

struct DoremiConfig {
  DataMix prior;
  double step_size = 1.0;   // eta
  double smoothing = 1e-3;  // c
  // Negative excess losses are clipped to 0 before the exponent.
  bool clip_negative = true;

  void validate() const {
    if (!(step_size > 0.0) || !std::isfinite(step_size))
      throw ConfigError("DoReMi step size must be > 0");
    if (!(smoothing >= 0.0 && smoothing < 1.0))
      throw ConfigError("DoReMi smoothing must lie in [0, 1)");
  }
};

// One vector of per-domain excess losses per training step.
using ExcessLossTrace = std::vector<std::vector<double>>;

// Multiplicative-weights pass over the trace. Per step:
//   alpha <- normalize(alpha * exp(eta * max(excess, 0)))
//   w_t    = (1 - c) * alpha + c / K
// and the result is the mean of w_t over all steps. alpha is kept in log
// space so long traces cannot overflow.
inline DataMix doremi_weights(const ExcessLossTrace& trace,
                              const DoremiConfig& cfg) {
  cfg.validate();
  const std::size_t k = cfg.prior.size();
  if (trace.empty()) throw DataError("excess-loss trace is empty");

  std::vector<double> log_alpha(k);
  for (std::size_t i = 0; i < k; ++i)
    log_alpha[i] = cfg.prior[i] > 0.0 ? std::log(cfg.prior[i])
                                      : -std::numeric_limits<double>::infinity();

  std::vector<double> sum_w(k, 0.0);
  for (std::size_t step = 0; step < trace.size(); ++step) {
    const auto& excess = trace[step];
    if (excess.size() != k)
      throw DataError("trace step " + std::to_string(step) + " has " +
                      std::to_string(excess.size()) + " domains, expected " +
                      std::to_string(k));
    for (std::size_t i = 0; i < k; ++i) {
      if (!std::isfinite(excess[i]))
        throw DataError("trace step " + std::to_string(step) +
                        " has a non-finite loss");
      const double x = cfg.clip_negative ? std::max(excess[i], 0.0) : excess[i];
      log_alpha[i] += cfg.step_size * x;
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_alpha) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : log_alpha) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    for (double& v : log_alpha) v -= log_z;

    for (std::size_t i = 0; i < k; ++i) {
      const double alpha = std::exp(log_alpha[i]);
      sum_w[i] += (1.0 - cfg.smoothing) * alpha +
                  cfg.smoothing / static_cast<double>(k);
    }
  }
  double total = 0.0;
  for (double v : sum_w) total += v;
  for (double& v : sum_w) v /= total;
  return DataMix(cfg.prior.table(), std::move(sum_w));
}

// ---------------------------------------------------------------------------
// Online Data Mixing (EXP3 variant)
// ---------------------------------------------------------------------------

enum class OdmVariant {
  Paper,   // softmax(eps_{t-1} * R)
  Github,  // softmax(R)
};

// Exploration rate eps_t for K arms.
using EpsilonSchedule = std::function<double(std::uint64_t t, std::size_t k)>;

// min(1/K, sqrt(ln K / (K t))), with eps_0 = 1/K. A single arm always gets 1.
inline double default_epsilon(std::uint64_t t, std::size_t k) {
  const double inv_k = 1.0 / static_cast<double>(k);
  if (k <= 1 || t == 0) return inv_k;
  const double kd = static_cast<double>(k);
  return std::min(inv_k, std::sqrt(std::log(kd) / (kd * static_cast<double>(t))));
}

// (1 - K eps_t) softmax(scale * R) + eps_t, with scale = eps_{t-1} for the
// Paper variant and 1 for the Github variant.
inline std::vector<double> odm_weights(std::span<const double> reward_estimates,
                                       double eps_prev, double eps_now,
                                       OdmVariant variant) {
  const std::size_t k = reward_estimates.size();
  if (k == 0) throw ConfigError("ODM needs at least one arm");
  if (!(eps_now >= 0.0 && eps_now <= 1.0 / static_cast<double>(k) + 1e-15))
    throw ConfigError("ODM exploration rate must lie in [0, 1/K]");
  const double scale = variant == OdmVariant::Paper ? eps_prev : 1.0;
  std::vector<double> logits(k);
  for (std::size_t i = 0; i < k; ++i) logits[i] = scale * reward_estimates[i];
  auto p = softmax(logits);
  const double keep = 1.0 - static_cast<double>(k) * eps_now;
  for (double& x : p) x = keep * x + eps_now;
  return p;
}

// Functional bandit state: every update returns a new value.
struct OdmState {
  DatasetTable table;
  std::vector<double> reward_estimates;
  // Updates applied so far; the next weights are for step `step + 1`.
  std::uint64_t step = 0;
  EpsilonSchedule schedule = default_epsilon;

  explicit OdmState(DatasetTable t, EpsilonSchedule s = default_epsilon)
      : table(std::move(t)),
        reward_estimates(table.size(), 0.0),
        schedule(std::move(s)) {}

  std::size_t arms() const noexcept { return table.size(); }
  double epsilon(std::uint64_t t) const { return schedule(t, arms()); }
};

inline DataMix odm_step(const OdmState& state, OdmVariant variant) {
  const std::uint64_t t = state.step + 1;
  auto w = odm_weights(state.reward_estimates, state.epsilon(t - 1),
                       state.epsilon(t), variant);
  // Rounding can leave the sum a few ulps off; renormalize exactly once.
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return DataMix(state.table, std::move(w));
}

// Importance-weighted reward update of the sampled arm, using the weights
// that sampled it.
inline OdmState odm_update(const OdmState& state, std::size_t sampled_arm,
                           double reward, std::span<const double> sampling_weights) {
  if (sampled_arm >= state.arms())
    throw ConfigError("sampled arm " + std::to_string(sampled_arm) +
                      " out of range for " + std::to_string(state.arms()) +
                      " arms");
  if (sampling_weights.size() != state.arms())
    throw ConfigError("sampling weights do not match the arm count");
  if (!(sampling_weights[sampled_arm] > 0.0))
    throw ConfigError("sampled arm has zero sampling weight");
  OdmState next = state;
  next.reward_estimates[sampled_arm] += reward / sampling_weights[sampled_arm];
  next.step += 1;
  return next;
}

// As above, with the sampling weights recomputed from the state itself.
inline OdmState odm_update(const OdmState& state, std::size_t sampled_arm,
                           double reward, OdmVariant variant) {
  const auto w = odm_step(state, variant);
  return odm_update(state, sampled_arm, reward, w.weights());
}

using RewardFn = std::function<double(std::uint64_t step, std::size_t arm)>;

struct OdmSimulation {
  DataMix final_mix;
  // Weights used to sample at each step, in order.
  std::vector<std::vector<double>> history;
  OdmState state;
};

// Seeded online loop: weights -> multinomial arm draw -> reward -> update.
inline OdmSimulation odm_simulate(const DatasetTable& table,
                                  const RewardFn& reward_fn, std::uint64_t steps,
                                  OdmVariant variant, std::uint64_t seed,
                                  EpsilonSchedule schedule = default_epsilon) {
  if (steps < 1) throw ConfigError("ODM simulation needs at least one step");
  OdmState state(table, std::move(schedule));
  Rng rng(seed);
  std::vector<std::vector<double>> history;
  history.reserve(steps);
  for (std::uint64_t s = 0; s < steps; ++s) {
    const auto mix = odm_step(state, variant);
    const std::size_t arm = rng.categorical(mix.weights());
    const double reward = reward_fn(state.step + 1, arm);
    state = odm_update(state, arm, reward, mix.weights());
    history.push_back(mix.weights());
  }
  auto final_mix = odm_step(state, variant);
  return OdmSimulation{std::move(final_mix), std::move(history), std::move(state)};
}

}  // namespace datamix
