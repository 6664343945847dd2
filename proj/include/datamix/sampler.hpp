#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datamix/errors.hpp"
#include "datamix/mixcore.hpp"
#include "datamix/rng.hpp"

namespace datamix {

struct Document {
  std::string id;
  std::uint64_t token_count = 0;

  friend bool operator==(const Document&, const Document&) = default;
};

struct SamplerConfig {
  std::uint64_t sequence_length = 1;
  std::uint64_t batch_size = 1;
  std::uint64_t base_seed = 0;

  void validate() const {
    if (sequence_length < 1) throw ConfigError("sequence length must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

// Shuffle seed for one dataset's epoch.
constexpr std::uint64_t epoch_seed(std::uint64_t base_seed,
                                   std::uint64_t dataset_index,
                                   std::uint64_t epoch) noexcept {
  return derive_seed(derive_seed(base_seed, dataset_index), epoch);
}

// A contiguous run of tokens [offset, offset + length) of one document.
struct Slice {
  std::size_t document = 0;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint64_t epoch = 0;

  friend bool operator==(const Slice&, const Slice&) = default;
};

// Exactly S tokens, assembled from one or more document slices.
struct Sequence {
  std::size_t dataset = 0;
  std::vector<Slice> slices;

  std::uint64_t token_count() const {
    std::uint64_t n = 0;
    for (const auto& s : slices) n += s.length;
    return n;
  }

  friend bool operator==(const Sequence&, const Sequence&) = default;
};

// Content hash of a sequence over document ids and token ranges.
inline std::uint64_t sequence_hash(const Sequence& seq,
                                   std::span<const Document> docs) {
  std::uint64_t h = fnv1a64(std::to_string(seq.dataset));
  for (const auto& s : seq.slices) {
    h = fnv1a64("|", h);
    h = fnv1a64(docs[s.document].id, h);
    h = fnv1a64(":" + std::to_string(s.offset) + "+" + std::to_string(s.length), h);
  }
  return h;
}

// Packs one dataset's documents into dense sequences of S tokens. Each epoch
// visits the documents in a fresh Fisher-Yates order seeded by
// epoch_seed(base, dataset, epoch); the unconsumed tail of the current
// document carries over into the next sequence.
class PackingIterator {
 public:
  PackingIterator(std::shared_ptr<const std::vector<Document>> docs,
                  std::size_t dataset_index, std::uint64_t sequence_length,
                  std::uint64_t base_seed)
      : docs_(std::move(docs)),
        dataset_(dataset_index),
        seq_len_(sequence_length),
        base_seed_(base_seed) {
    if (!docs_ || docs_->empty())
      throw ConfigError("dataset " + std::to_string(dataset_index) +
                        " has no documents");
    if (seq_len_ < 1) throw ConfigError("sequence length must be >= 1");
    for (const auto& d : *docs_)
      if (d.token_count < 1)
        throw DataError("document '" + d.id + "' has no tokens");
    start_epoch(0);
  }

  PackingIterator(std::vector<Document> docs, std::size_t dataset_index,
                  std::uint64_t sequence_length, std::uint64_t base_seed)
      : PackingIterator(std::make_shared<const std::vector<Document>>(std::move(docs)),
                        dataset_index, sequence_length, base_seed) {}

  Sequence next_sequence() {
    Sequence seq;
    seq.dataset = dataset_;
    std::uint64_t needed = seq_len_;
    while (needed > 0) {
      if (position_ == order_.size()) start_epoch(epoch_ + 1);
      const std::size_t doc = order_[position_];
      const std::uint64_t remaining = (*docs_)[doc].token_count - offset_;
      const std::uint64_t take = std::min(remaining, needed);
      seq.slices.push_back(Slice{doc, offset_, take, epoch_});
      needed -= take;
      offset_ += take;
      if (offset_ == (*docs_)[doc].token_count) {
        ++position_;
        offset_ = 0;
      }
    }
    return seq;
  }

  std::uint64_t epoch() const noexcept { return epoch_; }
  std::size_t dataset_index() const noexcept { return dataset_; }
  const std::vector<Document>& documents() const noexcept { return *docs_; }
  const std::vector<std::size_t>& epoch_order() const noexcept { return order_; }

  // Tokens of the partially consumed document still waiting to be emitted.
  std::uint64_t buffered_tokens() const {
    if (offset_ == 0 || position_ == order_.size()) return 0;
    return (*docs_)[order_[position_]].token_count - offset_;
  }

 private:
  void start_epoch(std::uint64_t epoch) {
    epoch_ = epoch;
    order_.resize(docs_->size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(epoch_seed(base_seed_, dataset_, epoch_));
    rng.shuffle(order_);
    position_ = 0;
    offset_ = 0;
  }

  std::shared_ptr<const std::vector<Document>> docs_;
  std::size_t dataset_;
  std::uint64_t seq_len_;
  std::uint64_t base_seed_;
  std::uint64_t epoch_ = 0;
  std::vector<std::size_t> order_;
  std::size_t position_ = 0;
  std::uint64_t offset_ = 0;
};

// One batch: for each of `batch_size` slots, draw a dataset from the mix and
// take that dataset's next packed sequence.
inline std::vector<Sequence> next_batch(std::span<PackingIterator> iters,
                                        const DataMix& mix, Rng& rng,
                                        std::uint64_t batch_size) {
  if (iters.size() != mix.size())
    throw ConfigError("iterator count does not match the mix");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Sequence> batch;
  batch.reserve(batch_size);
  for (std::uint64_t slot = 0; slot < batch_size; ++slot) {
    const std::size_t idx = rng.categorical(mix.weights());
    batch.push_back(iters[idx].next_sequence());
  }
  return batch;
}

// Owns the per-dataset iterators and the dataset-choice generator.
class BatchSampler {
 public:
  BatchSampler(DataMix mix, std::vector<std::vector<Document>> docs,
               const SamplerConfig& cfg)
      : mix_(std::move(mix)), cfg_(cfg), rng_(derive_seed(cfg.base_seed, ~0ULL)) {
    cfg_.validate();
    if (docs.size() != mix_.size())
      throw ConfigError("document lists do not match the mix");
    for (std::size_t i = 0; i < docs.size(); ++i) {
      docs_.push_back(std::make_shared<const std::vector<Document>>(std::move(docs[i])));
      iters_.emplace_back(docs_.back(), i, cfg_.sequence_length, cfg_.base_seed);
    }
  }

  std::vector<Sequence> next_batch() {
    ++step_;
    return datamix::next_batch(iters_, mix_, rng_, cfg_.batch_size);
  }

  std::uint64_t step() const noexcept { return step_; }
  const DataMix& mix() const noexcept { return mix_; }
  const std::vector<PackingIterator>& iterators() const noexcept { return iters_; }
  std::span<const Document> documents(std::size_t dataset) const {
    return *docs_.at(dataset);
  }

 private:
  DataMix mix_;
  SamplerConfig cfg_;
  Rng rng_;
  std::vector<std::shared_ptr<const std::vector<Document>>> docs_;
  std::vector<PackingIterator> iters_;
  std::uint64_t step_ = 0;
};

// floor(T * D_t / D_s) without overflow.
inline std::uint64_t subsample_target(std::uint64_t total_tokens,
                                      std::uint64_t train_tokens,
                                      std::uint64_t simulate_tokens) {
  if (train_tokens < 1) throw ConfigError("train token count must be >= 1");
  if (train_tokens > simulate_tokens)
    throw ConfigError("train tokens exceed simulated tokens; the simulation "
                      "can only shrink datasets");
  const unsigned __int128 prod =
      static_cast<unsigned __int128>(total_tokens) * train_tokens;
  return static_cast<std::uint64_t>(prod / simulate_tokens);
}

// Shrinks each dataset to about T * D_t / D_s tokens so that training for D_t
// tokens epochs every dataset as often as training for D_s tokens would.
// Documents are kept whole, in seeded-shuffle order, up to and including the
// one whose cumulative count first reaches the target. At least one document
// is always kept.
inline std::vector<std::vector<Document>> subsample(
    const DatasetTable& table, const std::vector<std::vector<Document>>& docs,
    std::uint64_t train_tokens, std::uint64_t simulate_tokens,
    std::uint64_t seed) {
  if (docs.size() != table.size())
    throw ConfigError("document lists do not match the dataset table");
  std::vector<std::vector<Document>> out(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto& list = docs[d];
    if (list.empty())
      throw DataError("dataset '" + table.name(d) + "' has no documents");
    std::uint64_t total = 0;
    for (const auto& doc : list) total += doc.token_count;
    const std::uint64_t target = subsample_target(total, train_tokens, simulate_tokens);

    std::vector<std::size_t> order(list.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, d));
    rng.shuffle(order);

    std::uint64_t kept = 0;
    for (std::size_t idx : order) {
      if (!out[d].empty() && kept >= target) break;
      out[d].push_back(list[idx]);
      kept += list[idx].token_count;
    }
  }
  return out;
}

}  // namespace datamix
