#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "datamix/errors.hpp"
#include "datamix/rng.hpp"

namespace datamix::eval {

// One evaluated training run: lower-is-better metrics per task.
struct RunRecord {
  std::string method;
  double flops = 0.0;
  std::map<std::string, double> metrics;
  // Empty when the run table carries no setting column.
  std::string setting;

  void validate() const {
    if (!(flops > 0.0) || !std::isfinite(flops))
      throw DataError("run '" + method + "' has non-positive FLOPs");
    for (const auto& [task, v] : metrics)
      if (!std::isfinite(v))
        throw DataError("run '" + method + "' has a non-finite metric for '" +
                        task + "'");
  }
};

// Mean negative log-probability over the answer tokens.
inline double nll_per_token(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw DataError("answer has no tokens");
  double s = 0.0;
  for (double lp : token_logprobs) s -= lp;
  return s / static_cast<double>(token_logprobs.size());
}

inline double log_sum_exp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// -log(p_correct / sum_options p), per answer token. `option_logprob_sums`
// must contain the correct option's sum as well.
inline double normalized_nll(double correct_logprob_sum,
                             std::span<const double> option_logprob_sums,
                             std::size_t correct_token_count = 1) {
  if (option_logprob_sums.empty()) throw DataError("no answer options given");
  if (correct_token_count == 0) throw DataError("correct answer has no tokens");
  const double lse = log_sum_exp(option_logprob_sums);
  // Clamp rounding noise; the true value is never negative.
  const double nll = std::max(0.0, lse - correct_logprob_sum);
  return nll / static_cast<double>(correct_token_count);
}

// L = a * C^b, fitted as log L = log a + b log C. Stored in log space.
struct ScalingFit {
  double log_a = 0.0;
  double b = 0.0;
  // Sum of squared residuals in log space.
  double residual = 0.0;
  std::size_t points = 0;

  double a() const { return std::exp(log_a); }
  double predict(double flops) const { return std::exp(log_a + b * std::log(flops)); }
};

inline ScalingFit fit_scaling(std::span<const double> flops,
                              std::span<const double> metric) {
  if (flops.size() != metric.size())
    throw DataError("FLOP and metric vectors differ in length");
  std::set<double> distinct(flops.begin(), flops.end());
  if (distinct.size() < 2)
    throw DataError("a scaling fit needs at least two distinct FLOP values");
  const auto n = static_cast<double>(flops.size());
  std::vector<double> x(flops.size()), y(flops.size());
  for (std::size_t i = 0; i < flops.size(); ++i) {
    if (!(flops[i] > 0.0)) throw DataError("FLOP values must be positive");
    if (!(metric[i] > 0.0) || !std::isfinite(metric[i]))
      throw DataError("metric values must be positive to take logs");
    x[i] = std::log(flops[i]);
    y[i] = std::log(metric[i]);
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  ScalingFit fit;
  fit.b = sxy / sxx;
  fit.log_a = my - fit.b * mx;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.log_a + fit.b * x[i]);
    fit.residual += r * r;
  }
  fit.points = x.size();
  return fit;
}

inline ScalingFit fit_scaling(std::span<const RunRecord> runs,
                              const std::string& task) {
  std::vector<double> c, l;
  for (const auto& r : runs) {
    auto it = r.metrics.find(task);
    if (it == r.metrics.end())
      throw DataError("run '" + r.method + "' lacks task '" + task + "'");
    c.push_back(r.flops);
    l.push_back(it->second);
  }
  return fit_scaling(c, l);
}

struct SpeedupResult {
  double value = 1.0;
  // Set when the method curve does not decrease with compute, so the target
  // is only reached by extrapolating the wrong way.
  std::optional<std::string> warning;
};

// FLOP ratio reference / C_method where the method's curve reaches the
// baseline's fitted value at `reference_flops`. Computed entirely in log
// space, so identical fits give exactly 1.
inline SpeedupResult speedup(const ScalingFit& fit, const ScalingFit& baseline,
                             double reference_flops) {
  if (!(reference_flops > 0.0)) throw DataError("reference FLOPs must be > 0");
  if (fit.b == 0.0)
    throw DataError("method curve is flat (b = 0); no compute level reaches a "
                    "different metric");
  const double log_ref = std::log(reference_flops);
  const double log_ratio =
      ((fit.b - baseline.b) * log_ref - (baseline.log_a - fit.log_a)) / fit.b;
  SpeedupResult out;
  out.value = std::exp(log_ratio);
  if (fit.b > 0.0)
    out.warning = "method metric increases with compute; target reached only "
                  "by wrong-sign extrapolation";
  return out;
}

// Ranks (1 = lowest metric) with tied entries sharing the average rank.
inline std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline bool same_scale(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b));
}

// Per-task ranks of methods at one compute scale, averaged over tasks.
// Tasks are the union of task names across the selected runs; a method
// missing any of them is a data error.
inline std::map<std::string, double> mean_rank(std::span<const RunRecord> runs,
                                               double scale) {
  std::map<std::string, const RunRecord*> by_method;
  std::set<std::string> tasks;
  for (const auto& r : runs) {
    if (!same_scale(r.flops, scale)) continue;
    if (!by_method.emplace(r.method, &r).second)
      throw DataError("method '" + r.method + "' has several runs at scale " +
                      std::to_string(scale));
    for (const auto& [t, v] : r.metrics) tasks.insert(t);
  }
  if (by_method.empty())
    throw DataError("no runs at scale " + std::to_string(scale));
  if (tasks.empty()) throw DataError("runs carry no task metrics");

  std::vector<std::string> methods;
  for (const auto& [m, _] : by_method) methods.push_back(m);
  std::map<std::string, double> sum;
  for (const auto& task : tasks) {
    std::vector<double> vals;
    for (const auto& m : methods) {
      const auto& metrics = by_method[m]->metrics;
      auto it = metrics.find(task);
      if (it == metrics.end() || !std::isfinite(it->second))
        throw DataError("method '" + m + "' is missing task '" + task +
                        "' at scale " + std::to_string(scale));
      vals.push_back(it->second);
    }
    const auto ranks = average_ranks(vals);
    for (std::size_t i = 0; i < methods.size(); ++i) sum[methods[i]] += ranks[i];
  }
  for (auto& [m, s] : sum) s /= static_cast<double>(tasks.size());
  return sum;
}

// Mean of the per-scale mean ranks over every scale present in `runs`.
inline std::map<std::string, double> mean_rank_all_scales(
    std::span<const RunRecord> runs) {
  std::vector<double> scales;
  for (const auto& r : runs) {
    bool seen = false;
    for (double s : scales) seen = seen || same_scale(s, r.flops);
    if (!seen) scales.push_back(r.flops);
  }
  std::sort(scales.begin(), scales.end());
  std::map<std::string, double> sum;
  std::map<std::string, std::size_t> count;
  for (double s : scales) {
    for (const auto& [m, rank] : mean_rank(runs, s)) {
      sum[m] += rank;
      ++count[m];
    }
  }
  for (auto& [m, v] : sum) v /= static_cast<double>(count[m]);
  return sum;
}

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

// Sample Pearson r with a two-sided p from Student's t on n - 2 dof.
inline Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation inputs differ in length");
  if (x.size() < 3) throw DataError("correlation needs at least 3 points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0))
    throw DataError("correlation undefined: an input has zero variance");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = n - 2.0;
  const double one_minus_r2 = 1.0 - c.r * c.r;
  if (one_minus_r2 <= 0.0) {
    c.p_value = 0.0;
  } else {
    const double t = std::abs(c.r) * std::sqrt(dof / one_minus_r2);
    boost::math::students_t dist(dof);
    c.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
  }
  return c;
}

struct BootstrapSummary {
  double sample_mean = 0.0;     // mean of the input values
  double bootstrap_mean = 0.0;  // mean of the resample means
  double sd = 0.0;              // sd of the resample means (population form)
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t resamples = 0;
};

inline double percentile(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Resamples with replacement; resample i draws from its own stream
// derive_seed(seed, i), so results do not depend on evaluation order.
inline BootstrapSummary bootstrap_mean(std::span<const double> values,
                                       std::size_t resamples = 10000,
                                       std::uint64_t seed = 0,
                                       double confidence = 0.95) {
  if (values.empty()) throw DataError("bootstrap needs at least one value");
  if (resamples == 0) throw ConfigError("bootstrap needs at least one resample");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw ConfigError("confidence level must lie in (0, 1)");
  const std::size_t n = values.size();
  std::vector<double> means(resamples);
  for (std::size_t i = 0; i < resamples; ++i) {
    Rng rng(derive_seed(seed, i));
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += values[rng.below(n)];
    means[i] = s / static_cast<double>(n);
  }
  BootstrapSummary out;
  out.resamples = resamples;
  out.sample_mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  out.bootstrap_mean = std::accumulate(means.begin(), means.end(), 0.0) /
                       static_cast<double>(resamples);
  double var = 0.0;
  for (double m : means) var += (m - out.bootstrap_mean) * (m - out.bootstrap_mean);
  out.sd = std::sqrt(var / static_cast<double>(resamples));
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - confidence);
  out.ci_low = percentile(means, tail);
  out.ci_high = percentile(means, 1.0 - tail);
  return out;
}

}  // namespace datamix::eval
