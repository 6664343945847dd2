#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "datamix/errors.hpp"
#include "datamix/mixcore.hpp"

namespace datamix {

// Per-coordinate upper bounds of the capped simplex
// { w : w >= 0, sum(w) = 1, w <= caps }.
class CapVector {
 public:
  explicit CapVector(std::vector<double> caps) : caps_(std::move(caps)) {
    if (caps_.empty()) throw ConfigError("cap vector is empty");
    for (double c : caps_)
      if (!(c > 0.0)) throw ConfigError("caps must be > 0");
  }

  // Epoch cap C rewritten as w_i <= C * t_i / B_T.
  static CapVector from_budget(const DatasetTable& table,
                               const BudgetSpec& budget) {
    budget.validate();
    const auto b = static_cast<double>(budget.budget_tokens);
    std::vector<double> caps(table.size());
    for (std::size_t i = 0; i < caps.size(); ++i)
      caps[i] = budget.epoch_cap * static_cast<double>(table.tokens(i)) / b;
    return CapVector(std::move(caps));
  }

  std::size_t size() const noexcept { return caps_.size(); }
  double operator[](std::size_t i) const { return caps_[i]; }
  const std::vector<double>& values() const noexcept { return caps_; }

  double sum() const {
    double s = 0.0;
    for (double c : caps_) s += c;
    return s;
  }

 private:
  std::vector<double> caps_;
};

inline constexpr double kFeasibilitySlack = 1e-12;

inline bool feasible(const CapVector& caps) {
  return caps.sum() >= 1.0 - kFeasibilitySlack;
}

namespace detail {

inline double clipped_sum(std::span<const double> v, const CapVector& caps,
                          double tau) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += std::clamp(v[i] - tau, 0.0, caps[i]);
  return s;
}

}  // namespace detail

// Euclidean projection of `v` onto the capped simplex. The minimizer has the
// form w_i = clip(v_i - tau, 0, cap_i); tau is found by bisection (the
// clipped sum is non-increasing in tau), then refined in closed form on the
// coordinates left strictly inside their bounds.
inline std::vector<double> project(std::span<const double> v,
                                   const CapVector& caps) {
  if (v.size() != caps.size())
    throw ConfigError("projection input and caps differ in length");
  for (double x : v)
    if (!std::isfinite(x)) throw DataError("projection input is not finite");
  if (!feasible(caps)) throw InfeasibleError(caps.sum());

  const std::size_t n = v.size();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, v[i] - caps[i]);
    hi = std::max(hi, v[i]);
  }
  // clipped_sum(lo) = sum(caps) >= 1 and clipped_sum(hi) = 0.
  double tau = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    tau = 0.5 * (lo + hi);
    const double s = detail::clipped_sum(v, caps, tau);
    if (std::abs(s - 1.0) < 1e-12) break;
    if (!(lo < tau && tau < hi)) break;  // bracket exhausted
    if (s > 1.0)
      lo = tau;
    else
      hi = tau;
  }

  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::clamp(v[i] - tau, 0.0, caps[i]);

  // Closed-form tau on the current active set removes residual bisection error.
  double fixed = 0.0;
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] > 0.0 && w[i] < caps[i]) {
      free_sum += v[i];
      ++free_count;
    } else {
      fixed += w[i];
    }
  }
  if (free_count > 0) {
    const double exact_tau =
        (free_sum - (1.0 - fixed)) / static_cast<double>(free_count);
    std::vector<double> refined(n);
    for (std::size_t i = 0; i < n; ++i)
      refined[i] = std::clamp(v[i] - exact_tau, 0.0, caps[i]);
    double s_old = 0.0, s_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s_old += w[i];
      s_new += refined[i];
    }
    if (std::abs(s_new - 1.0) <= std::abs(s_old - 1.0)) w = std::move(refined);
  }
  return w;
}

inline DataMix project(std::span<const double> v, const CapVector& caps,
                       const DatasetTable& table) {
  return DataMix(table, project(v, caps));
}

}  // namespace datamix
