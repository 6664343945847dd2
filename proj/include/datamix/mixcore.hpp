#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "datamix/errors.hpp"

namespace datamix {

struct DatasetEntry {
  std::string name;
  std::uint64_t tokens = 0;

  friend bool operator==(const DatasetEntry&, const DatasetEntry&) = default;
};

// Ordered, immutable list of named datasets with their token counts. The
// entry order defines the index space of every weight vector built on it.
// Copies share storage.
class DatasetTable {
 public:
  explicit DatasetTable(std::vector<DatasetEntry> entries) {
    if (entries.empty()) throw DataError("dataset table is empty");
    auto data = std::make_shared<Data>();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.name.empty()) throw DataError("dataset name is empty");
      if (e.tokens == 0)
        throw DataError("dataset '" + e.name + "' has zero tokens");
      if (!data->index.emplace(e.name, i).second)
        throw DataError("duplicate dataset name '" + e.name + "'");
    }
    data->entries = std::move(entries);
    data_ = std::move(data);
  }

  std::size_t size() const noexcept { return data_->entries.size(); }
  const std::vector<DatasetEntry>& entries() const noexcept {
    return data_->entries;
  }
  const std::string& name(std::size_t i) const { return data_->entries.at(i).name; }
  std::uint64_t tokens(std::size_t i) const { return data_->entries.at(i).tokens; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    auto it = data_->index.find(name);
    if (it == data_->index.end()) return std::nullopt;
    return it->second;
  }

  // Exact total; Table-1-scale corpora (~2e12 tokens) fit easily in 64 bits.
  std::uint64_t total_tokens() const noexcept {
    std::uint64_t total = 0;
    for (const auto& e : data_->entries) total += e.tokens;
    return total;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(size());
    for (const auto& e : data_->entries) out.push_back(e.name);
    return out;
  }

  friend bool operator==(const DatasetTable& a, const DatasetTable& b) {
    return a.data_ == b.data_ || a.data_->entries == b.data_->entries;
  }

 private:
  struct Data {
    std::vector<DatasetEntry> entries;
    std::unordered_map<std::string, std::size_t> index;
  };
  std::shared_ptr<const Data> data_;
};

inline constexpr double kSimplexSumTolerance = 1e-9;

// Sampling weights over the datasets of one table.
class DataMix {
 public:
  DataMix(DatasetTable table, std::vector<double> weights)
      : table_(std::move(table)), weights_(std::move(weights)) {
    if (weights_.size() != table_.size())
      throw DataError("mix has " + std::to_string(weights_.size()) +
                      " weights for " + std::to_string(table_.size()) +
                      " datasets");
    double sum = 0.0;
    for (double w : weights_) {
      if (!std::isfinite(w) || w < 0.0)
        throw DataError("mix weight is negative or non-finite");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kSimplexSumTolerance)
      throw DataError("mix weights sum to " + std::to_string(sum) +
                      ", not 1");
  }

  const DatasetTable& table() const noexcept { return table_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_.at(i); }

  double weight_of(const std::string& name) const {
    auto idx = table_.index_of(name);
    if (!idx) throw ConfigError("unknown dataset '" + name + "'");
    return weights_[*idx];
  }

 private:
  DatasetTable table_;
  std::vector<double> weights_;
};

struct BudgetSpec {
  std::uint64_t budget_tokens = 1;
  double epoch_cap = 1.0;
  // Unset means |D|.
  std::optional<double> risk_scale;

  void validate() const {
    if (budget_tokens < 1) throw ConfigError("budget_tokens must be >= 1");
    if (!(epoch_cap > 0.0) || !std::isfinite(epoch_cap))
      throw ConfigError("epoch_cap must be > 0");
    if (risk_scale && !(*risk_scale > 0.0))
      throw ConfigError("risk_scale must be > 0");
  }

  double risk_scale_for(const DatasetTable& table) const {
    return risk_scale.value_or(static_cast<double>(table.size()));
  }
};

struct ManualAdjustments {
  // Datasets not listed keep multiplier 1.
  std::map<std::string, double> multipliers;

  void validate(const DatasetTable& table) const {
    for (const auto& [name, m] : multipliers) {
      if (!table.index_of(name))
        throw ConfigError("manual adjustment names unknown dataset '" + name +
                          "'");
      if (!(m > 0.0) || !std::isfinite(m))
        throw ConfigError("multiplier for '" + name + "' must be > 0");
    }
  }
};

inline void require_same_table(const DatasetTable& a, const DatasetTable& b) {
  if (!(a == b))
    throw ConfigError("operands are defined over different dataset tables");
}

inline DataMix uniform_mix(const DatasetTable& table) {
  const double w = 1.0 / static_cast<double>(table.size());
  return DataMix(table, std::vector<double>(table.size(), w));
}

inline DataMix proportional_mix(const DatasetTable& table) {
  const auto total = static_cast<double>(table.total_tokens());
  std::vector<double> w(table.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = static_cast<double>(table.tokens(i)) / total;
  return DataMix(table, std::move(w));
}

// w_i proportional to multiplier_i * t_i, divided once by the exact sum. The
// renormalization is global, so unadjusted datasets shift too.
inline DataMix manual_mix(const DatasetTable& table,
                          const ManualAdjustments& adj) {
  adj.validate(table);
  std::vector<double> w(table.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    auto it = adj.multipliers.find(table.name(i));
    const double m = it == adj.multipliers.end() ? 1.0 : it->second;
    w[i] = m * static_cast<double>(table.tokens(i));
  }
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return DataMix(table, std::move(w));
}

// Epochs per dataset implied by a mix: B_T * w_i / t_i.
inline std::vector<double> sampling_proportions(const DataMix& mix,
                                                const BudgetSpec& budget) {
  budget.validate();
  const auto& table = mix.table();
  const auto b = static_cast<double>(budget.budget_tokens);
  std::vector<double> out(mix.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = b * mix[i] / static_cast<double>(table.tokens(i));
  return out;
}

inline std::vector<double> sampling_proportions(const DataMix& mix,
                                                const DatasetTable& table,
                                                const BudgetSpec& budget) {
  require_same_table(mix.table(), table);
  return sampling_proportions(mix, budget);
}

}  // namespace datamix
