#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "datamix/errors.hpp"
#include "datamix/mixcore.hpp"
#include "datamix/optimizer.hpp"
#include "datamix/prompts.hpp"
#include "datamix/provider.hpp"
#include "datamix/rng.hpp"

namespace datamix::medu {

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

enum class UtilityLabel { Great, Good, Okay, Poor, Useless };

inline constexpr UtilityLabel kAllLabels[] = {UtilityLabel::Great, UtilityLabel::Good,
                                              UtilityLabel::Okay, UtilityLabel::Poor,
                                              UtilityLabel::Useless};

constexpr double label_value(UtilityLabel l) noexcept {
  switch (l) {
    case UtilityLabel::Great: return 1.0;
    case UtilityLabel::Good: return 0.75;
    case UtilityLabel::Okay: return 0.5;
    case UtilityLabel::Poor: return 0.25;
    case UtilityLabel::Useless: return 0.0;
  }
  return 0.0;
}

constexpr std::string_view label_name(UtilityLabel l) noexcept {
  switch (l) {
    case UtilityLabel::Great: return "Great";
    case UtilityLabel::Good: return "Good";
    case UtilityLabel::Okay: return "Okay";
    case UtilityLabel::Poor: return "Poor";
    case UtilityLabel::Useless: return "Useless";
  }
  return "";
}

inline std::optional<UtilityLabel> label_from_value(double v) noexcept {
  for (auto l : kAllLabels)
    if (label_value(l) == v) return l;
  return std::nullopt;
}

inline std::optional<UtilityLabel> label_from_word(std::string_view word) {
  std::string lower;
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (auto l : kAllLabels) {
    std::string name(label_name(l));
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (name == lower) return l;
  }
  return std::nullopt;
}

// Reads the last alphabetic word of a completion ("**Useless.**" -> Useless).
inline std::optional<UtilityLabel> parse_label(std::string_view completion) {
  std::size_t end = completion.size();
  while (end > 0 && !std::isalpha(static_cast<unsigned char>(completion[end - 1]))) --end;
  std::size_t begin = end;
  while (begin > 0 && std::isalpha(static_cast<unsigned char>(completion[begin - 1]))) --begin;
  if (begin == end) return std::nullopt;
  return label_from_word(completion.substr(begin, end - begin));
}

// ---------------------------------------------------------------------------
// Templates and token accounting
// ---------------------------------------------------------------------------

// Replaces each "{slot}" whose name is in `values`; other braces are left
// as-is and substituted text is never rescanned.
inline std::string render_template(std::string_view tpl,
                                   const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tpl.size());
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tpl[i++]);
  }
  return out;
}

// Whitespace-delimited word spans, used as the token unit for prompt budgets
// and document chunking.
struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

inline std::vector<WordSpan> split_words(std::string_view text) {
  std::vector<WordSpan> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    const std::size_t b = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    words.push_back({b, i});
  }
  return words;
}

inline std::size_t count_tokens(std::string_view text) { return split_words(text).size(); }

inline std::string join_examples(std::span<const std::string> examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += "\n\n";
    out += examples[i];
  }
  return out;
}

inline std::string render_describe_prompt(std::span<const std::string> examples) {
  return render_template(prompts::kDescribeTemplate, {{"corpus", join_examples(examples)}});
}

inline std::string render_merge_prompt(const std::string& a, const std::string& b,
                                       const std::string& comparison = "") {
  return render_template(prompts::kMergeTemplate, {{"description_a", a},
                                                   {"description_b", b},
                                                   {"comparison", comparison}});
}

inline std::string render_classify_prompt(const std::string& example,
                                          const std::string& test_description,
                                          const std::string& prompt_addition = "") {
  return render_template(prompts::kClassifyTemplate,
                         {{"prompt_addition", prompt_addition},
                          {"example", example},
                          {"test_description", test_description}});
}

// ---------------------------------------------------------------------------
// Audit log
// ---------------------------------------------------------------------------

// Every prompt/completion exchange, in a deterministic order. Thread-safe.
class AuditLog {
 public:
  void append(nlohmann::json record) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(record));
  }
  std::vector<nlohmann::json> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }
  void write_jsonl(std::ostream& os) const {
    std::lock_guard lock(mu_);
    for (const auto& r : records_) os << r.dump() << '\n';
  }

 private:
  mutable std::mutex mu_;
  std::vector<nlohmann::json> records_;
};

struct MeduConfig {
  DecodingParams decoding;
  // Prompt budget in whitespace tokens for description prompts.
  std::size_t max_prompt_tokens = 6000;
  std::size_t chunk_max_tokens = 2048;
  // Extra attempts after an unparseable classification.
  std::size_t classify_retries = 3;
  std::string prompt_addition;
  std::string comparison;
  std::size_t concurrency = 1;
  AuditLog* audit = nullptr;
};

// ---------------------------------------------------------------------------
// Benchmark descriptions
// ---------------------------------------------------------------------------

struct BenchmarkDescription {
  std::string benchmark;
  std::string text;
  // Some development examples were dropped or cut to fit the prompt budget.
  bool truncated = false;

  nlohmann::json to_json() const {
    return {{"benchmark", benchmark}, {"description", text}, {"truncated", truncated}};
  }
  static BenchmarkDescription from_json(const nlohmann::json& j) {
    BenchmarkDescription d;
    d.benchmark = j.value("benchmark", std::string{});
    d.text = j.at("description").get<std::string>();
    d.truncated = j.value("truncated", false);
    if (d.text.empty()) throw DataError("benchmark description is empty");
    return d;
  }
};

// Greedy packing of development examples into batches whose describe prompt
// stays within `max_prompt_tokens`. An example too large on its own gets a
// batch of its own (and is truncated when described).
inline std::vector<std::vector<std::string>> batch_examples(
    std::span<const std::string> examples, std::size_t max_prompt_tokens) {
  const std::size_t overhead = count_tokens(render_describe_prompt({}));
  std::vector<std::vector<std::string>> batches;
  std::vector<std::string> current;
  std::size_t used = overhead;
  for (const auto& ex : examples) {
    const std::size_t n = count_tokens(ex);
    if (!current.empty() && used + n > max_prompt_tokens) {
      batches.push_back(std::move(current));
      current.clear();
      used = overhead;
    }
    current.push_back(ex);
    used += n;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

inline std::string complete_logged(CompletionProvider& provider, const std::string& prompt,
                                   const MeduConfig& cfg, nlohmann::json meta) {
  std::string completion = provider.complete(prompt, cfg.decoding);
  if (cfg.audit) {
    meta["prompt"] = prompt;
    meta["completion"] = completion;
    cfg.audit->append(std::move(meta));
  }
  return completion;
}

inline BenchmarkDescription describe_batch(const std::string& benchmark,
                                           std::span<const std::string> examples,
                                           CompletionProvider& provider,
                                           const MeduConfig& cfg = {}) {
  if (examples.empty())
    throw ConfigError("describe_batch needs at least one development example");
  std::vector<std::string> kept(examples.begin(), examples.end());
  bool truncated = false;
  std::string prompt = render_describe_prompt(kept);
  while (count_tokens(prompt) > cfg.max_prompt_tokens && kept.size() > 1) {
    kept.pop_back();
    truncated = true;
    prompt = render_describe_prompt(kept);
  }
  if (count_tokens(prompt) > cfg.max_prompt_tokens) {
    const std::size_t overhead = count_tokens(render_describe_prompt({}));
    const std::size_t room = cfg.max_prompt_tokens > overhead ? cfg.max_prompt_tokens - overhead : 0;
    if (room == 0)
      throw ConfigError("prompt budget is smaller than the describe template");
    const auto words = split_words(kept.front());
    kept.front() = kept.front().substr(0, words[room - 1].end);
    truncated = true;
    prompt = render_describe_prompt(kept);
  }
  BenchmarkDescription d;
  d.benchmark = benchmark;
  d.text = complete_logged(provider, prompt, cfg,
                           {{"kind", "describe"}, {"benchmark", benchmark}});
  d.truncated = truncated;
  return d;
}

// Pairwise merging, one level at a time: adjacent pairs in list order are
// merged and an odd last description is carried to the next level. n inputs
// always take n - 1 provider calls.
inline BenchmarkDescription merge_descriptions(std::vector<BenchmarkDescription> level,
                                               CompletionProvider& provider,
                                               const MeduConfig& cfg = {}) {
  if (level.empty()) throw ConfigError("no descriptions to merge");
  const std::string benchmark = level.front().benchmark;
  std::size_t round = 0;
  while (level.size() > 1) {
    ++round;
    std::vector<BenchmarkDescription> next((level.size() + 1) / 2);
    const std::size_t pairs = level.size() / 2;
    auto merge_pair = [&](std::size_t p) {
      const auto& a = level[2 * p];
      const auto& b = level[2 * p + 1];
      BenchmarkDescription m;
      m.benchmark = benchmark;
      m.truncated = a.truncated || b.truncated;
      const std::string prompt = render_merge_prompt(a.text, b.text, cfg.comparison);
      m.text = provider.complete(prompt, cfg.decoding);
      return std::pair{prompt, m};
    };
    std::vector<std::pair<std::string, BenchmarkDescription>> merged(pairs);
    if (cfg.concurrency > 1) {
      std::vector<std::future<std::pair<std::string, BenchmarkDescription>>> futs;
      for (std::size_t p = 0; p < pairs; ++p)
        futs.push_back(std::async(std::launch::async, merge_pair, p));
      for (std::size_t p = 0; p < pairs; ++p) merged[p] = futs[p].get();
    } else {
      for (std::size_t p = 0; p < pairs; ++p) merged[p] = merge_pair(p);
    }
    for (std::size_t p = 0; p < pairs; ++p) {
      if (cfg.audit)
        cfg.audit->append({{"kind", "merge"},
                           {"benchmark", benchmark},
                           {"round", round},
                           {"pair", p},
                           {"prompt", merged[p].first},
                           {"completion", merged[p].second.text}});
      next[p] = std::move(merged[p].second);
    }
    if (level.size() % 2 == 1) next.back() = std::move(level.back());
    level = std::move(next);
  }
  return std::move(level.front());
}

// Batches the development set, describes each batch, and merges the results.
inline BenchmarkDescription describe_benchmark(const std::string& benchmark,
                                               std::span<const std::string> examples,
                                               CompletionProvider& provider,
                                               const MeduConfig& cfg = {}) {
  std::vector<BenchmarkDescription> descs;
  for (const auto& batch : batch_examples(examples, cfg.max_prompt_tokens))
    descs.push_back(describe_batch(benchmark, batch, provider, cfg));
  return merge_descriptions(std::move(descs), provider, cfg);
}

// ---------------------------------------------------------------------------
// Chunking and classification
// ---------------------------------------------------------------------------

// Whole sequence when it fits, else a window of `max_tokens` with a uniform
// random start.
template <typename T>
std::span<const T> chunk_document(std::span<const T> tokens, std::size_t max_tokens,
                                  Rng& rng) {
  if (max_tokens < 1) throw ConfigError("chunk size must be >= 1");
  if (tokens.size() <= max_tokens) return tokens;
  const std::size_t start = static_cast<std::size_t>(rng.below(tokens.size() - max_tokens + 1));
  return tokens.subspan(start, max_tokens);
}

// Text form of chunk_document over whitespace tokens; keeps the original
// spacing inside the window.
inline std::string chunk_text(const std::string& text, std::size_t max_tokens, Rng& rng) {
  const auto words = split_words(text);
  const auto window = chunk_document(std::span<const WordSpan>(words), max_tokens, rng);
  if (window.empty()) return text;
  if (window.size() == words.size()) return text;
  return text.substr(window.front().begin, window.back().end - window.front().begin);
}

struct ClassifyAttempt {
  std::string prompt;
  std::string completion;
};

struct ClassifyOutcome {
  std::optional<UtilityLabel> label;
  std::vector<ClassifyAttempt> attempts;
};

inline ClassifyOutcome classify_attempts(const std::string& chunk,
                                         const BenchmarkDescription& description,
                                         CompletionProvider& provider,
                                         const MeduConfig& cfg) {
  if (chunk.empty()) throw ConfigError("document chunk is empty");
  const std::string prompt =
      render_classify_prompt(chunk, description.text, cfg.prompt_addition);
  ClassifyOutcome out;
  for (std::size_t attempt = 0; attempt <= cfg.classify_retries; ++attempt) {
    std::string completion = provider.complete(prompt, cfg.decoding);
    out.label = parse_label(completion);
    out.attempts.push_back({prompt, std::move(completion)});
    if (out.label) break;
  }
  return out;
}

inline UtilityLabel classify_document(const std::string& chunk,
                                      const BenchmarkDescription& description,
                                      CompletionProvider& provider,
                                      const MeduConfig& cfg = {}) {
  auto outcome = classify_attempts(chunk, description, provider, cfg);
  if (cfg.audit)
    for (const auto& a : outcome.attempts)
      cfg.audit->append({{"kind", "classify"},
                         {"benchmark", description.benchmark},
                         {"prompt", a.prompt},
                         {"completion", a.completion}});
  if (!outcome.label)
    throw ClassificationError("no utility label after " +
                                  std::to_string(outcome.attempts.size()) + " attempts",
                              outcome.attempts.back().completion);
  return *outcome.label;
}

// ---------------------------------------------------------------------------
// Corpus scoring
// ---------------------------------------------------------------------------

struct CorpusDocument {
  std::string id;
  std::string text;
};

struct CorpusScore {
  std::string corpus;
  std::vector<std::string> tasks;
  // Mean label value per task over the successfully classified documents.
  std::vector<double> scores;
  // Documents whose classification never parsed, per task.
  std::vector<std::size_t> excluded;
  std::vector<std::string> sampled_ids;
};

// Scores one corpus against every task description. A seeded sample of
// min(sample_size, |corpus|) documents is drawn without replacement; each
// sampled document is chunked once and classified for every task.
inline CorpusScore score_corpus(const std::string& corpus_name,
                                std::span<const CorpusDocument> corpus,
                                std::span<const BenchmarkDescription> descriptions,
                                CompletionProvider& provider, std::uint64_t seed,
                                std::size_t sample_size = 256,
                                const MeduConfig& cfg = {}) {
  if (corpus.empty()) throw ConfigError("corpus '" + corpus_name + "' is empty");
  if (descriptions.empty()) throw ConfigError("no task descriptions given");
  if (sample_size < 1) throw ConfigError("sample size must be >= 1");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng sampler(derive_seed(seed, 0));
  sampler.shuffle(order);
  order.resize(std::min(sample_size, corpus.size()));

  std::vector<std::string> chunks(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Rng chunk_rng(derive_seed(derive_seed(seed, 1), order[i]));
    chunks[i] = chunk_text(corpus[order[i]].text, cfg.chunk_max_tokens, chunk_rng);
  }

  const std::size_t n_tasks = descriptions.size();
  const std::size_t jobs = order.size() * n_tasks;
  std::vector<ClassifyOutcome> outcomes(jobs);
  auto run = [&](std::size_t job) {
    return classify_attempts(chunks[job / n_tasks], descriptions[job % n_tasks], provider, cfg);
  };
  const std::size_t width = std::max<std::size_t>(1, cfg.concurrency);
  for (std::size_t start = 0; start < jobs; start += width) {
    const std::size_t stop = std::min(jobs, start + width);
    if (width == 1) {
      outcomes[start] = run(start);
      continue;
    }
    std::vector<std::future<ClassifyOutcome>> futs;
    for (std::size_t j = start; j < stop; ++j)
      futs.push_back(std::async(std::launch::async, run, j));
    for (std::size_t j = start; j < stop; ++j) outcomes[j] = futs[j - start].get();
  }

  CorpusScore out;
  out.corpus = corpus_name;
  out.scores.assign(n_tasks, 0.0);
  out.excluded.assign(n_tasks, 0);
  std::vector<std::size_t> counted(n_tasks, 0);
  for (const auto& d : descriptions) out.tasks.push_back(d.benchmark);
  for (std::size_t i : order) out.sampled_ids.push_back(corpus[i].id);

  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t doc = job / n_tasks, task = job % n_tasks;
    const auto& o = outcomes[job];
    if (cfg.audit)
      for (const auto& a : o.attempts)
        cfg.audit->append({{"kind", "classify"},
                           {"corpus", corpus_name},
                           {"document", corpus[order[doc]].id},
                           {"benchmark", descriptions[task].benchmark},
                           {"prompt", a.prompt},
                           {"completion", a.completion},
                           {"label", o.label ? std::string(label_name(*o.label)) : std::string{}}});
    if (o.label) {
      out.scores[task] += label_value(*o.label);
      ++counted[task];
    } else {
      ++out.excluded[task];
    }
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (counted[t] == 0)
      throw DataError("every classification failed for task '" +
                      descriptions[t].benchmark + "' on corpus '" + corpus_name + "'");
    out.scores[t] /= static_cast<double>(counted[t]);
  }
  return out;
}

// Stacks per-corpus scores (rows ordered like `table`) into a utility matrix
// through the same normalization used for ablation metrics.
inline UtilityMatrix utility_matrix_from_scores(const DatasetTable& table,
                                                std::span<const CorpusScore> scores) {
  if (scores.size() != table.size())
    throw DataError("need one corpus score per dataset");
  const auto& tasks = scores.front().tasks;
  Matrix m(table.size(), tasks.size());
  for (std::size_t r = 0; r < table.size(); ++r) {
    const CorpusScore* row = nullptr;
    for (const auto& s : scores)
      if (s.corpus == table.name(r)) row = &s;
    if (!row) throw DataError("no MEDU score for dataset '" + table.name(r) + "'");
    if (row->tasks != tasks) throw DataError("corpus scores use different task lists");
    for (std::size_t c = 0; c < tasks.size(); ++c) m(r, c) = row->scores[c];
  }
  return normalize_utilities(table, tasks, m, MetricOrientation::HigherIsBetter);
}

}  // namespace datamix::medu
