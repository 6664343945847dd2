#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datamix/capped_simplex.hpp"
#include "datamix/errors.hpp"
#include "datamix/mixcore.hpp"

namespace datamix {

// Dense row-major matrix, rows = datasets, columns = tasks.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != m.cols_) throw DataError("ragged matrix rows");
      std::copy(rows[r].begin(), rows[r].end(), m.data_.begin() + r * m.cols_);
    }
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class MetricOrientation { LowerIsBetter, HigherIsBetter };

// Per task column: orient so higher is better, z-score (population sd), map
// through the standard normal CDF, then rescale to min 0 / max 1. Constant
// columns become 0.5.
inline Matrix normalize_metric_columns(
    const Matrix& m,
    MetricOrientation orientation = MetricOrientation::LowerIsBetter) {
  if (m.rows() == 0) throw DataError("metric matrix has no datasets");
  Matrix u(m.rows(), m.cols());
  const double sign = orientation == MetricOrientation::LowerIsBetter ? -1.0 : 1.0;
  const auto n = static_cast<double>(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      if (!std::isfinite(m(r, c))) throw DataError("metric matrix has a non-finite entry");
      mean += sign * m(r, c);
    }
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double d = sign * m(r, c) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0)) {
      for (std::size_t r = 0; r < m.rows(); ++r) u(r, c) = 0.5;
      continue;
    }
    double lo = 1.0, hi = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const double z = (sign * m(r, c) - mean) / sd;
      const double p = 0.5 * std::erfc(-z / std::sqrt(2.0));
      u(r, c) = p;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
    if (!(hi > lo)) {
      for (std::size_t r = 0; r < m.rows(); ++r) u(r, c) = 0.5;
      continue;
    }
    for (std::size_t r = 0; r < m.rows(); ++r) u(r, c) = (u(r, c) - lo) / (hi - lo);
  }
  return u;
}

// Raw metrics M and normalized utilities U over one dataset table.
class UtilityMatrix {
 public:
  UtilityMatrix(DatasetTable table, std::vector<std::string> task_names,
                Matrix raw_metrics, Matrix utilities)
      : table_(std::move(table)),
        tasks_(std::move(task_names)),
        raw_(std::move(raw_metrics)),
        utilities_(std::move(utilities)) {
    if (utilities_.rows() != table_.size())
      throw DataError("utility matrix rows do not match the dataset table");
    if (utilities_.cols() != tasks_.size() || raw_.cols() != tasks_.size() ||
        raw_.rows() != utilities_.rows())
      throw DataError("utility matrix columns do not match the task list");
    for (std::size_t r = 0; r < utilities_.rows(); ++r)
      for (double x : utilities_.row(r))
        if (!(x >= 0.0 && x <= 1.0)) throw DataError("utility outside [0, 1]");
  }

  const DatasetTable& table() const noexcept { return table_; }
  const std::vector<std::string>& tasks() const noexcept { return tasks_; }
  const Matrix& raw_metrics() const noexcept { return raw_; }
  const Matrix& utilities() const noexcept { return utilities_; }

 private:
  DatasetTable table_;
  std::vector<std::string> tasks_;
  Matrix raw_;
  Matrix utilities_;
};

inline UtilityMatrix normalize_utilities(
    const DatasetTable& table, std::vector<std::string> task_names,
    const Matrix& metrics,
    MetricOrientation orientation = MetricOrientation::LowerIsBetter) {
  Matrix u = normalize_metric_columns(metrics, orientation);
  return UtilityMatrix(table, std::move(task_names), metrics, std::move(u));
}

struct SolverConfig {
  double step_size = 0.1;
  std::size_t max_iters = 5000;
  double tolerance = 1e-8;
  // Unset: taken from the budget, else |D|.
  std::optional<double> risk_scale;

  void validate() const {
    if (!(step_size > 0.0)) throw ConfigError("step_size must be > 0");
    if (max_iters == 0) throw ConfigError("max_iters must be > 0");
    if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
    if (risk_scale && !(*risk_scale > 0.0))
      throw ConfigError("risk_scale must be > 0");
  }
};

inline DataMix unimax(const DatasetTable& table, const BudgetSpec& budget) {
  const auto caps = CapVector::from_budget(table, budget);
  const std::vector<double> zero(table.size(), 0.0);
  return DataMix(table, project(zero, caps));
}

namespace detail {

inline std::vector<double> task_residual(const Matrix& u,
                                         std::span<const double> w) {
  std::vector<double> e(u.cols(), -1.0);
  for (std::size_t r = 0; r < u.rows(); ++r)
    for (std::size_t c = 0; c < u.cols(); ++c) e[c] += w[r] * u(r, c);
  return e;
}

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

}  // namespace detail

// ||w^T U - 1||_2 + risk_scale * w^T w
inline double utilimax_objective(const Matrix& u, std::span<const double> w,
                                 double risk_scale) {
  const auto e = detail::task_residual(u, w);
  double ww = 0.0;
  for (double x : w) ww += x * x;
  return detail::norm2(e) + risk_scale * ww;
}

inline std::vector<double> utilimax_gradient(const Matrix& u,
                                             std::span<const double> w,
                                             double risk_scale) {
  const auto e = detail::task_residual(u, w);
  const double norm = detail::norm2(e);
  std::vector<double> g(w.size());
  for (std::size_t r = 0; r < w.size(); ++r) {
    double gr = 2.0 * risk_scale * w[r];
    // The norm is not differentiable at a zero residual; its gradient is
    // taken as 0 there.
    if (norm >= 1e-12) {
      double dot = 0.0;
      for (std::size_t c = 0; c < u.cols(); ++c) dot += u(r, c) * e[c];
      gr += dot / norm;
    }
    g[r] = gr;
  }
  return g;
}

struct SolveReport {
  std::vector<double> weights;
  std::size_t iterations = 0;
  double stationarity = 0.0;
  double objective = 0.0;
};

// Projected gradient descent on the capped simplex, started from the UniMax
// point. The trial step starts at twice the last accepted one and halves
// until the sufficient-decrease test holds. Convergence is declared when
// ||w - P(w - step_size * grad)||_inf < tolerance.
inline SolveReport minimize_utility_objective(const Matrix& u,
                                              const CapVector& caps,
                                              double risk_scale,
                                              const SolverConfig& cfg) {
  cfg.validate();
  if (u.rows() != caps.size())
    throw ConfigError("utility matrix rows do not match the caps");
  const std::vector<double> zero(caps.size(), 0.0);
  std::vector<double> w = project(zero, caps);

  auto axpy = [](std::span<const double> x, double a, std::span<const double> g) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - a * g[i];
    return out;
  };

  SolveReport report;
  auto finish = [&](std::size_t iter, double stat) {
    report.weights = w;
    report.iterations = iter;
    report.stationarity = stat;
    report.objective = utilimax_objective(u, w, risk_scale);
    return report;
  };

  double f = utilimax_objective(u, w, risk_scale);
  double last_step = cfg.step_size;
  const double max_step = cfg.step_size * 1e4;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const auto g = utilimax_gradient(u, w, risk_scale);
    const auto probe = project(axpy(w, cfg.step_size, g), caps);
    double stat = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i)
      stat = std::max(stat, std::abs(w[i] - probe[i]));
    if (stat < cfg.tolerance) return finish(iter, stat);

    double step = std::min(max_step, 2.0 * last_step);
    auto candidate = project(axpy(w, step, g), caps);
    double f_new = utilimax_objective(u, candidate, risk_scale);
    for (int halvings = 0; halvings < 80; ++halvings) {
      double lin = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double d = candidate[i] - w[i];
        lin += g[i] * d;
        sq += d * d;
      }
      if (f_new <= f + lin + sq / (2.0 * step) + 1e-15 * std::abs(f)) break;
      step *= 0.5;
      candidate = project(axpy(w, step, g), caps);
      f_new = utilimax_objective(u, candidate, risk_scale);
    }
    if (!(f_new < f)) {
      // No step decreases the objective. At a zero task residual this is the
      // non-differentiable point of the norm, where the zero-gradient
      // convention overstates `stat`; accept it as the minimizer.
      if (detail::norm2(detail::task_residual(u, w)) < 1e-9)
        return finish(iter, stat);
      // Otherwise only rounding can block descent this close to stationarity.
      if (stat < std::sqrt(cfg.tolerance)) return finish(iter, stat);
      throw NonConvergenceError(w, stat);
    }
    w = std::move(candidate);
    f = f_new;
    last_step = step;
  }
  const auto g = utilimax_gradient(u, w, risk_scale);
  const auto probe = project(axpy(w, cfg.step_size, g), caps);
  double stat = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    stat = std::max(stat, std::abs(w[i] - probe[i]));
  if (stat < cfg.tolerance) return finish(cfg.max_iters, stat);
  throw NonConvergenceError(w, stat);
}

inline SolveReport utilimax_solve(const UtilityMatrix& um,
                                  const BudgetSpec& budget,
                                  const SolverConfig& cfg) {
  const auto caps = CapVector::from_budget(um.table(), budget);
  const double risk = cfg.risk_scale.value_or(budget.risk_scale_for(um.table()));
  return minimize_utility_objective(um.utilities(), caps, risk, cfg);
}

inline DataMix utilimax(const UtilityMatrix& um, const BudgetSpec& budget,
                        const SolverConfig& cfg = {}) {
  return DataMix(um.table(), utilimax_solve(um, budget, cfg).weights);
}

inline DataMix utilimax(const UtilityMatrix& um, const DatasetTable& table,
                        const BudgetSpec& budget, const SolverConfig& cfg = {}) {
  require_same_table(um.table(), table);
  return utilimax(um, budget, cfg);
}

// UtiliMax without the risk term.
inline DataMix greedy(const UtilityMatrix& um, const BudgetSpec& budget,
                      const SolverConfig& cfg = {}) {
  const auto caps = CapVector::from_budget(um.table(), budget);
  return DataMix(um.table(),
                 minimize_utility_objective(um.utilities(), caps, 0.0, cfg).weights);
}

inline DataMix greedy(const UtilityMatrix& um, const DatasetTable& table,
                      const BudgetSpec& budget, const SolverConfig& cfg = {}) {
  require_same_table(um.table(), table);
  return greedy(um, budget, cfg);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (double& x : p) x /= z;
  return p;
}

// Softmax over each dataset's mean utility across tasks.
inline DataMix softmax_mix(const UtilityMatrix& um, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  const Matrix& u = um.utilities();
  std::vector<double> logits(u.rows(), 0.0);
  for (std::size_t r = 0; r < u.rows(); ++r) {
    double s = 0.0;
    for (double x : u.row(r)) s += x;
    logits[r] = (u.cols() ? s / static_cast<double>(u.cols()) : 0.0) / temperature;
  }
  return DataMix(um.table(), softmax(logits));
}

}  // namespace datamix
