#pragma once

// Command-line front end. `run` takes argv plus the two output streams so the
// test suite can drive it in-process.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "datamix/capped_simplex.hpp"
#include "datamix/errors.hpp"
#include "datamix/eval.hpp"
#include "datamix/http_provider.hpp"
#include "datamix/io.hpp"
#include "datamix/learned.hpp"
#include "datamix/medu.hpp"
#include "datamix/mixcore.hpp"
#include "datamix/optimizer.hpp"
#include "datamix/provider.hpp"
#include "datamix/sampler.hpp"

namespace datamix::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Artifacts go to --out when given, else to stdout. The one-line summary goes
// to stdout, or to stderr when stdout carries the artifact.
inline void emit(Streams& s, const std::string& out_path, const std::string& content,
                 const std::string& summary) {
  if (out_path.empty()) {
    s.out << content;
    s.err << summary << "\n";
  } else {
    io::write_file(out_path, content);
    s.out << summary << " -> " << out_path << "\n";
  }
}

inline std::pair<std::string, std::string> split_pair(const std::string& kv,
                                                      const std::string& flag) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size())
    throw ConfigError(flag + " expects NAME=VALUE, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

// Token counts accept plain integers and exact scientific forms like 1.6e12.
inline std::uint64_t parse_token_count(const std::string& text, const std::string& flag) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec == std::errc() && p == text.data() + text.size()) return v;
  char* end = nullptr;
  const double d = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || !(d >= 1.0) || d > 1.8e19 || d != std::floor(d))
    throw ConfigError(flag + " must be a positive whole token count, got '" + text + "'");
  return static_cast<std::uint64_t>(d);
}

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

inline std::string mix_summary(const std::string& what, const DataMix& mix,
                               const std::optional<BudgetSpec>& budget) {
  std::string s = what + ": " + std::to_string(mix.size()) + " datasets";
  if (budget) {
    const auto epochs = sampling_proportions(mix, *budget);
    s += ", max epochs " + fixed(*std::max_element(epochs.begin(), epochs.end()));
  }
  double mx = 0.0;
  for (double w : mix.weights()) mx = std::max(mx, w);
  return s + ", max weight " + fixed(mx);
}

struct BudgetOptions {
  std::string budget_tokens;
  double epoch_cap = 1.0;
  std::optional<double> risk_scale;

  void add(CLI::App* app, bool required) {
    auto* b = app->add_option("--budget-tokens", budget_tokens,
                              "Training budget B_T in tokens (integer or e.g. 1.6e12)");
    auto* c = app->add_option("--epoch-cap", epoch_cap, "Maximum epochs per dataset C")
                  ->capture_default_str();
    if (required) {
      b->required();
      c->required();
    }
  }
  void add_risk(CLI::App* app) {
    app->add_option("--risk-scale", risk_scale,
                    "Weight of the concentration penalty w'w (default |D|)");
  }
  BudgetSpec spec() const {
    BudgetSpec b;
    b.budget_tokens = parse_token_count(budget_tokens, "--budget-tokens");
    b.epoch_cap = epoch_cap;
    b.risk_scale = risk_scale;
    b.validate();
    return b;
  }
  std::optional<BudgetSpec> maybe_spec() const {
    if (budget_tokens.empty()) return std::nullopt;
    return spec();
  }
};

inline const char* kTokensSchema =
    "Dataset table: CSV with header 'name,tokens', or JSON "
    "[{\"name\": ..., \"tokens\": ...}, ...].";

inline const char* kMixSchema =
    "Mix file: JSON {\"weights\": {\"<dataset>\": fraction, ...}} in table order, "
    "12 significant digits.";

inline const char* kMetricSchema =
    "Metric matrix: CSV with header 'dataset,<task>,...' and one row per dataset, or "
    "JSON {\"tasks\": [...], \"rows\": {\"<dataset>\": [values...]}}. With "
    "--orientation lower (default) smaller is better; higher flips that; normalized "
    "means the file already holds utilities in [0,1].";

inline const char* kRunSchema =
    "Run table: CSV with header 'method,[setting,]flops,<task>,...'; one row per "
    "training run, lower-is-better metrics, empty cells for missing values.";

inline const char* kProviderSchema =
    "Provider config JSON: {\"kind\": \"mock\", \"table\": \"mock.json\"} (or the mock "
    "table inline: \"responses\" {prompt key: text}, \"rules\" [{\"contains\", "
    "\"response\"}], \"default\"), or {\"kind\": \"http\", \"endpoint\", \"model\", "
    "\"api_key_env\", \"timeout_seconds\", \"retries\"}. Both accept \"temperature\" "
    "and \"max_tokens\".";

inline MetricOrientation parse_orientation(const std::string& s) {
  if (s == "lower") return MetricOrientation::LowerIsBetter;
  if (s == "higher") return MetricOrientation::HigherIsBetter;
  throw ConfigError("unknown orientation '" + s + "'");
}

inline UtilityMatrix load_utilities(const std::string& path, const DatasetTable& table,
                                    const std::string& orientation) {
  const auto metrics = io::load_metric_table(path);
  const Matrix m = metrics.aligned_to(table);
  if (orientation == "normalized") return UtilityMatrix(table, metrics.tasks, m, m);
  return normalize_utilities(table, metrics.tasks, m, parse_orientation(orientation));
}

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

struct ProviderHandle {
  std::unique_ptr<CompletionProvider> provider;
  DecodingParams decoding;
};

inline ProviderHandle load_provider(const std::string& path) {
  auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("provider config " + path + " is not a JSON object");
  ProviderHandle h;
  h.decoding.temperature = j.value("temperature", 0.0);
  h.decoding.max_tokens = j.value("max_tokens", 512);
  const std::string kind = j.value("kind", std::string{});
  if (kind == "mock") {
    if (j.contains("table")) {
      fs::path table = j.at("table").get<std::string>();
      if (table.is_relative()) table = fs::path(path).parent_path() / table;
      auto t = nlohmann::json::parse(io::read_file(table), nullptr, false);
      if (t.is_discarded()) throw DataError("mock table " + table.string() + " is not JSON");
      h.provider = std::make_unique<MockProvider>(MockProvider::from_json(t));
    } else {
      h.provider = std::make_unique<MockProvider>(MockProvider::from_json(j));
    }
  } else if (kind == "http") {
    h.provider = std::make_unique<HttpChatProvider>(HttpProviderConfig::from_json(j));
  } else {
    throw ConfigError("provider kind must be 'mock' or 'http'");
  }
  return h;
}

struct MeduOptions {
  std::string provider;
  std::size_t max_prompt_tokens = 6000;
  std::size_t chunk_max_tokens = 2048;
  std::size_t classify_retries = 3;
  std::string prompt_addition;
  std::string comparison;
  std::size_t concurrency = 1;
  std::string audit;

  void add(CLI::App* app) {
    app->add_option("--provider", provider, "Provider config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--max-prompt-tokens", max_prompt_tokens,
                    "Whitespace-token budget for description prompts")
        ->capture_default_str();
    app->add_option("--chunk-max-tokens", chunk_max_tokens,
                    "Largest document window sent for classification")
        ->capture_default_str();
    app->add_option("--classify-retries", classify_retries,
                    "Extra attempts after an unparseable label")
        ->capture_default_str();
    app->add_option("--prompt-addition", prompt_addition,
                    "Text for the {prompt_addition} slot (empty by default)");
    app->add_option("--comparison", comparison,
                    "Text for the {comparison} slot (empty by default)");
    app->add_option("--concurrency", concurrency, "Parallel provider calls")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--audit", audit, "Append prompts and completions to this JSONL file");
  }

  medu::MeduConfig config(const DecodingParams& decoding, medu::AuditLog* log) const {
    medu::MeduConfig c;
    c.decoding = decoding;
    c.max_prompt_tokens = max_prompt_tokens;
    c.chunk_max_tokens = chunk_max_tokens;
    c.classify_retries = classify_retries;
    c.prompt_addition = prompt_addition;
    c.comparison = comparison;
    c.concurrency = concurrency;
    c.audit = audit.empty() ? nullptr : log;
    return c;
  }

  void flush_audit(const medu::AuditLog& log) const {
    if (audit.empty()) return;
    std::ofstream os(audit, std::ios::app | std::ios::binary);
    if (!os) throw DataError("cannot write audit log " + audit);
    log.write_jsonl(os);
  }
};

inline std::vector<std::string> load_examples(const std::string& path) {
  std::vector<std::string> out;
  io::for_each_jsonl(io::read_file(path), [&](const nlohmann::json& j, std::size_t line) {
    if (j.is_string()) {
      out.push_back(j.get<std::string>());
    } else if (j.is_object() && j.contains("text")) {
      out.push_back(j.at("text").get<std::string>());
    } else {
      throw DataError("example line " + std::to_string(line) +
                      " must be a string or {\"text\": ...}");
    }
  });
  return out;
}

inline medu::BenchmarkDescription load_description(const std::string& path) {
  auto j = nlohmann::json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded()) throw DataError("description " + path + " is not JSON");
  return medu::BenchmarkDescription::from_json(j);
}

// ---------------------------------------------------------------------------
// Command registration
// ---------------------------------------------------------------------------

struct Runner {
  CLI::App* app;
  std::function<void(Streams&)> action;
};

inline void add_out(CLI::App* app, std::string& out, const std::string& what) {
  app->add_option("--out", out, what + " (stdout when omitted)");
}

inline void register_mix(CLI::App& root, std::vector<Runner>& runners) {
  auto* mix = root.add_subcommand("mix", "Compute a data mix");
  mix->require_subcommand(1);

  struct Common {
    std::string tokens, out;
    BudgetOptions budget;
  };

  auto add_common = [](CLI::App* app, Common& c) {
    app->add_option("--tokens", c.tokens, "Dataset table (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    add_out(app, c.out, "Mix JSON");
    app->footer(std::string(kTokensSchema) + "\n" + kMixSchema);
  };

  {
    auto c = std::make_shared<Common>();
    auto* app = mix->add_subcommand("uniform", "Equal weight per dataset");
    add_common(app, *c);
    c->budget.add(app, false);
    runners.push_back({app, [c](Streams& s) {
                         const auto table = io::load_dataset_table(c->tokens);
                         const auto m = uniform_mix(table);
                         emit(s, c->out, io::mix_json_text(m),
                              mix_summary("mix uniform", m, c->budget.maybe_spec()));
                       }});
  }
  {
    auto c = std::make_shared<Common>();
    auto* app = mix->add_subcommand("proportional", "Weights proportional to token counts");
    add_common(app, *c);
    c->budget.add(app, false);
    runners.push_back({app, [c](Streams& s) {
                         const auto table = io::load_dataset_table(c->tokens);
                         const auto m = proportional_mix(table);
                         emit(s, c->out, io::mix_json_text(m),
                              mix_summary("mix proportional", m, c->budget.maybe_spec()));
                       }});
  }
  {
    auto c = std::make_shared<Common>();
    auto mult = std::make_shared<std::vector<std::string>>();
    auto* app = mix->add_subcommand(
        "manual", "Proportional mix with per-dataset multipliers, renormalized globally");
    add_common(app, *c);
    c->budget.add(app, false);
    app->add_option("--multiplier", *mult,
                    "NAME=FACTOR; repeatable. Unlisted datasets keep factor 1");
    runners.push_back({app, [c, mult](Streams& s) {
                         const auto table = io::load_dataset_table(c->tokens);
                         ManualAdjustments adj;
                         for (const auto& kv : *mult) {
                           auto [name, value] = split_pair(kv, "--multiplier");
                           adj.multipliers[name] = io::parse_double(value, "multiplier");
                         }
                         const auto m = manual_mix(table, adj);
                         emit(s, c->out, io::mix_json_text(m),
                              mix_summary("mix manual", m, c->budget.maybe_spec()));
                       }});
  }
  {
    auto c = std::make_shared<Common>();
    auto* app = mix->add_subcommand("unimax", "Minimum-norm mix under the epoch cap");
    add_common(app, *c);
    c->budget.add(app, true);
    runners.push_back({app, [c](Streams& s) {
                         const auto table = io::load_dataset_table(c->tokens);
                         const auto budget = c->budget.spec();
                         const auto m = unimax(table, budget);
                         emit(s, c->out, io::mix_json_text(m),
                              mix_summary("mix unimax", m, budget));
                       }});
  }

  struct Solve {
    Common common;
    std::string utilities, orientation = "lower", emit_utilities;
    SolverConfig solver;
  };
  auto add_solve = [&](CLI::App* app, Solve& c, bool risk) {
    add_common(app, c.common);
    c.common.budget.add(app, true);
    if (risk) c.common.budget.add_risk(app);
    app->add_option("--utilities", c.utilities, "Metric or utility matrix (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--orientation", c.orientation,
                    "lower | higher | normalized (see below)")
        ->capture_default_str()
        ->check(CLI::IsMember({"lower", "higher", "normalized"}));
    app->add_option("--emit-utilities", c.emit_utilities,
                    "Also write the normalized utility matrix as CSV");
    app->add_option("--step-size", c.solver.step_size, "Initial projected-gradient step")
        ->capture_default_str();
    app->add_option("--max-iters", c.solver.max_iters, "Iteration limit")
        ->capture_default_str();
    app->add_option("--tolerance", c.solver.tolerance, "Stationarity tolerance")
        ->capture_default_str();
    app->footer(std::string(kTokensSchema) + "\n" + kMetricSchema + "\n" + kMixSchema);
  };
  auto write_utilities = [](const Solve& c, const UtilityMatrix& um) {
    if (c.emit_utilities.empty()) return;
    io::write_file(c.emit_utilities,
                   io::metric_csv_text(um.table().names(), um.tasks(), um.utilities()));
  };

  {
    auto c = std::make_shared<Solve>();
    auto* app = mix->add_subcommand(
        "utilimax", "Closest mix to the ideal utility with a concentration penalty");
    add_solve(app, *c, true);
    runners.push_back({app, [c, write_utilities](Streams& s) {
                         const auto table = io::load_dataset_table(c->common.tokens);
                         const auto budget = c->common.budget.spec();
                         const auto um = load_utilities(c->utilities, table, c->orientation);
                         write_utilities(*c, um);
                         const auto m = utilimax(um, budget, c->solver);
                         emit(s, c->common.out, io::mix_json_text(m),
                              mix_summary("mix utilimax", m, budget));
                       }});
  }
  {
    auto c = std::make_shared<Solve>();
    auto* app = mix->add_subcommand("greedy", "UtiliMax without the concentration penalty");
    add_solve(app, *c, false);
    runners.push_back({app, [c, write_utilities](Streams& s) {
                         const auto table = io::load_dataset_table(c->common.tokens);
                         const auto budget = c->common.budget.spec();
                         const auto um = load_utilities(c->utilities, table, c->orientation);
                         write_utilities(*c, um);
                         const auto m = greedy(um, budget, c->solver);
                         emit(s, c->common.out, io::mix_json_text(m),
                              mix_summary("mix greedy", m, budget));
                       }});
  }
  {
    auto c = std::make_shared<Common>();
    auto util = std::make_shared<std::string>();
    auto orient = std::make_shared<std::string>("lower");
    auto temp = std::make_shared<double>(1.0);
    auto* app = mix->add_subcommand("softmax", "Softmax over mean utility per dataset");
    add_common(app, *c);
    c->budget.add(app, false);
    app->add_option("--utilities", *util, "Metric or utility matrix (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--orientation", *orient, "lower | higher | normalized")
        ->capture_default_str()
        ->check(CLI::IsMember({"lower", "higher", "normalized"}));
    app->add_option("--temperature", *temp, "Softmax temperature")->capture_default_str();
    app->footer(std::string(kTokensSchema) + "\n" + kMetricSchema + "\n" + kMixSchema);
    runners.push_back({app, [c, util, orient, temp](Streams& s) {
                         const auto table = io::load_dataset_table(c->tokens);
                         const auto um = load_utilities(*util, table, *orient);
                         const auto m = softmax_mix(um, *temp);
                         emit(s, c->out, io::mix_json_text(m),
                              mix_summary("mix softmax", m, c->budget.maybe_spec()));
                       }});
  }
}

inline void register_learned(CLI::App& root, std::vector<Runner>& runners) {
  auto* learned = root.add_subcommand("learned", "Learned-baseline mixes");
  learned->require_subcommand(1);

  {
    struct Opts {
      std::string tokens, trace, prior, out;
      double step_size = 1.0, smoothing = 1e-3;
      bool no_clip = false;
    };
    auto o = std::make_shared<Opts>();
    auto* app = learned->add_subcommand("doremi", "Average of multiplicative-weight updates");
    app->add_option("--tokens", o->tokens, "Dataset table (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--trace", o->trace, "Excess-loss trace JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--prior", o->prior, "Prior mix JSON (uniform when omitted)")
        ->check(CLI::ExistingFile);
    app->add_option("--step-size", o->step_size, "Multiplicative step eta")
        ->capture_default_str();
    app->add_option("--smoothing", o->smoothing, "Uniform smoothing c in [0, 1)")
        ->capture_default_str();
    app->add_flag("--no-clip", o->no_clip, "Keep negative excess losses");
    add_out(app, o->out, "Mix JSON");
    app->footer(std::string(kTokensSchema) +
                "\nTrace: JSONL, one JSON array of |D| excess losses per step.\n" + kMixSchema);
    runners.push_back({app, [o](Streams& s) {
                         const auto table = io::load_dataset_table(o->tokens);
                         DoremiConfig cfg{o->prior.empty() ? uniform_mix(table)
                                                           : io::load_mix(o->prior, table)};
                         cfg.step_size = o->step_size;
                         cfg.smoothing = o->smoothing;
                         cfg.clip_negative = !o->no_clip;
                         const auto trace = io::excess_trace_from_jsonl(io::read_file(o->trace));
                         const auto m = doremi_weights(trace, cfg);
                         emit(s, o->out, io::mix_json_text(m),
                              mix_summary("learned doremi (" + std::to_string(trace.size()) +
                                              " steps)",
                                          m, std::nullopt));
                       }});
  }
  {
    struct Opts {
      std::string tokens, variant = "paper", reward_trace, out, history;
      std::vector<double> arm_rewards;
      std::uint64_t steps = 0, seed = 0;
      std::optional<double> epsilon;
    };
    auto o = std::make_shared<Opts>();
    auto* app = learned->add_subcommand("odm-sim", "Simulated online bandit mixing");
    app->add_option("--tokens", o->tokens, "Dataset table (CSV or JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--steps", o->steps, "Number of sampling steps")->required();
    app->add_option("--seed", o->seed, "Arm-sampling seed")->required();
    app->add_option("--variant", o->variant, "paper | github")
        ->capture_default_str()
        ->check(CLI::IsMember({"paper", "github"}));
    auto* ar = app->add_option("--arm-rewards", o->arm_rewards,
                               "Constant reward per arm, comma separated")
                   ->delimiter(',');
    auto* rt = app->add_option("--reward-trace", o->reward_trace,
                               "JSONL of per-arm reward arrays; step s uses line s mod n")
                   ->check(CLI::ExistingFile);
    ar->excludes(rt);
    app->add_option("--epsilon", o->epsilon,
                    "Constant exploration rate instead of the decaying schedule");
    add_out(app, o->out, "Final mix JSON");
    app->add_option("--history", o->history, "Weight history JSONL");
    app->footer(std::string(kTokensSchema) + "\n" + kMixSchema +
                "\nHistory: JSONL {\"step\", \"weights\": {name: fraction}} per step.");
    runners.push_back({app, [o](Streams& s) {
                         const auto table = io::load_dataset_table(o->tokens);
                         std::vector<std::vector<double>> rewards;
                         if (!o->arm_rewards.empty()) rewards.push_back(o->arm_rewards);
                         if (!o->reward_trace.empty())
                           rewards = io::excess_trace_from_jsonl(io::read_file(o->reward_trace));
                         if (rewards.empty())
                           throw ConfigError("give --arm-rewards or --reward-trace");
                         for (const auto& r : rewards)
                           if (r.size() != table.size())
                             throw DataError("reward vectors must have one entry per dataset");
                         RewardFn fn = [rewards](std::uint64_t step, std::size_t arm) {
                           return rewards[(step - 1) % rewards.size()][arm];
                         };
                         EpsilonSchedule sched = default_epsilon;
                         if (o->epsilon) {
                           const double e = *o->epsilon;
                           sched = [e](std::uint64_t, std::size_t) { return e; };
                         }
                         const auto variant =
                             o->variant == "paper" ? OdmVariant::Paper : OdmVariant::Github;
                         auto sim = odm_simulate(table, fn, o->steps, variant, o->seed, sched);
                         if (!o->history.empty())
                           io::write_file(o->history, io::weight_history_jsonl(table, sim.history));
                         emit(s, o->out, io::mix_json_text(sim.final_mix),
                              mix_summary("learned odm-sim " + o->variant + " (" +
                                              std::to_string(o->steps) + " steps)",
                                          sim.final_mix, std::nullopt));
                       }});
  }
}

struct Manifests {
  std::vector<std::string> names;
  std::vector<std::string> paths;
  std::vector<std::vector<Document>> docs;
};

inline Manifests load_manifests(const std::vector<std::string>& specs) {
  Manifests m;
  for (const auto& kv : specs) {
    auto [name, path] = split_pair(kv, "--manifest");
    if (!fs::exists(path)) throw ConfigError("manifest " + path + " does not exist");
    m.names.push_back(name);
    m.paths.push_back(path);
    m.docs.push_back(io::manifest_from_jsonl(io::read_file(path)));
  }
  return m;
}

inline DatasetTable table_from_manifests(const Manifests& m) {
  std::vector<DatasetEntry> entries;
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    std::uint64_t total = 0;
    for (const auto& d : m.docs[i]) total += d.token_count;
    if (total == 0) throw ConfigError("dataset '" + m.names[i] + "' has no documents");
    entries.push_back({m.names[i], total});
  }
  return DatasetTable(std::move(entries));
}

inline void register_sample(CLI::App& root, std::vector<Runner>& runners) {
  auto* sample = root.add_subcommand("sample", "Batch creation and simulated epoching");
  sample->require_subcommand(1);
  const std::string manifest_schema =
      "Manifest: JSONL {\"id\", \"token_count\"} per document, one file per dataset.";

  {
    struct Opts {
      std::string mix, out;
      std::vector<std::string> manifests;
      std::uint64_t sequence_length = 0, batch_size = 0, steps = 0, seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* app = sample->add_subcommand("batches", "Draw packed batches from a mix");
    app->add_option("--mix", o->mix, "Mix JSON")->required()->check(CLI::ExistingFile);
    app->add_option("--manifest", o->manifests, "NAME=PATH per dataset; repeatable")
        ->required();
    app->add_option("--sequence-length", o->sequence_length, "Tokens per sequence S")
        ->required();
    app->add_option("--batch-size", o->batch_size, "Sequences per batch B")->required();
    app->add_option("--steps", o->steps, "Number of batches")->required();
    app->add_option("--seed", o->seed, "Base seed for shuffles and draws")->required();
    add_out(app, o->out, "Batch log JSONL");
    app->footer(std::string(kMixSchema) + "\n" + manifest_schema +
                "\nBatch log: JSONL {\"step\", \"slot\", \"dataset\", \"sequence_hash\"}.");
    runners.push_back({app, [o](Streams& s) {
                         const auto mf = load_manifests(o->manifests);
                         const auto mix_json = nlohmann::json::parse(io::read_file(o->mix));
                         // Order datasets as in the mix file.
                         const auto mix_ordered = ordered_json::parse(io::read_file(o->mix));
                         if (!mix_ordered.contains("weights") || !mix_ordered.at("weights").is_object())
                           throw DataError("mix file has no \"weights\" object");
                         Manifests ordered;
                         for (const auto& [name, _] : mix_ordered.at("weights").items()) {
                           auto it = std::find(mf.names.begin(), mf.names.end(), name);
                           if (it == mf.names.end())
                             throw ConfigError("no --manifest for dataset '" + name + "'");
                           const auto i = static_cast<std::size_t>(it - mf.names.begin());
                           ordered.names.push_back(name);
                           ordered.paths.push_back(mf.paths[i]);
                           ordered.docs.push_back(mf.docs[i]);
                         }
                         if (ordered.names.size() != mf.names.size())
                           throw ConfigError("--manifest names a dataset absent from the mix");
                         const auto table = table_from_manifests(ordered);
                         const auto mix = io::mix_from_json(mix_json, table);
                         SamplerConfig cfg{o->sequence_length, o->batch_size, o->seed};
                         BatchSampler sampler(mix, ordered.docs, cfg);
                         std::string log;
                         std::vector<std::uint64_t> counts(table.size(), 0);
                         for (std::uint64_t step = 1; step <= o->steps; ++step) {
                           const auto batch = sampler.next_batch();
                           for (std::size_t slot = 0; slot < batch.size(); ++slot) {
                             const auto& seq = batch[slot];
                             ++counts[seq.dataset];
                             log += ordered_json{{"step", step},
                                                 {"slot", slot},
                                                 {"dataset", table.name(seq.dataset)},
                                                 {"sequence_hash",
                                                  hex64(sequence_hash(
                                                      seq, sampler.documents(seq.dataset)))}}
                                        .dump() +
                                    "\n";
                           }
                         }
                         std::string summary = "sample batches: " + std::to_string(o->steps) +
                                               " batches of " + std::to_string(o->batch_size) +
                                               " sequences;";
                         for (std::size_t i = 0; i < counts.size(); ++i)
                           summary += " " + table.name(i) + "=" + std::to_string(counts[i]);
                         emit(s, o->out, log, summary);
                       }});
  }
  {
    struct Opts {
      std::vector<std::string> manifests;
      std::string train_tokens, simulate_tokens, out_dir;
      std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* app = sample->add_subcommand(
        "subsample", "Shrink each dataset to T * D_t / D_s tokens (whole documents)");
    app->add_option("--manifest", o->manifests, "NAME=PATH per dataset; repeatable")
        ->required();
    app->add_option("--train-tokens", o->train_tokens, "Actual training budget D_t")
        ->required();
    app->add_option("--simulate-tokens", o->simulate_tokens, "Simulated budget D_s >= D_t")
        ->required();
    app->add_option("--seed", o->seed, "Shuffle seed")->required();
    app->add_option("--out-dir", o->out_dir,
                    "Directory for the shrunk manifests (same file names as the inputs)")
        ->required();
    app->footer(manifest_schema);
    runners.push_back({app, [o](Streams& s) {
                         const auto mf = load_manifests(o->manifests);
                         const auto table = table_from_manifests(mf);
                         const auto kept = subsample(
                             table, mf.docs, parse_token_count(o->train_tokens, "--train-tokens"),
                             parse_token_count(o->simulate_tokens, "--simulate-tokens"), o->seed);
                         std::string summary = "sample subsample:";
                         std::set<std::string> written;
                         for (std::size_t i = 0; i < kept.size(); ++i) {
                           const auto name = fs::path(mf.paths[i]).filename().string();
                           if (!written.insert(name).second)
                             throw ConfigError("two manifests share the file name " + name);
                           io::write_file(fs::path(o->out_dir) / name, io::manifest_jsonl(kept[i]));
                           std::uint64_t tok = 0;
                           for (const auto& d : kept[i]) tok += d.token_count;
                           summary += " " + table.name(i) + " " + std::to_string(tok) + "/" +
                                      std::to_string(table.tokens(i)) + " tokens;";
                         }
                         summary.pop_back();
                         s.out << summary << " -> " << o->out_dir << "\n";
                       }});
  }
}

// Groups runs by (setting, method), preserving first-seen order.
inline std::vector<std::pair<std::pair<std::string, std::string>, std::vector<eval::RunRecord>>>
group_runs(const std::vector<eval::RunRecord>& runs) {
  std::vector<std::pair<std::pair<std::string, std::string>, std::vector<eval::RunRecord>>> out;
  for (const auto& r : runs) {
    auto key = std::make_pair(r.setting, r.method);
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& g) { return g.first == key; });
    if (it == out.end()) {
      out.push_back({key, {}});
      it = std::prev(out.end());
    }
    it->second.push_back(r);
  }
  return out;
}

// Runs of one group that have a finite value for `task`.
inline std::vector<eval::RunRecord> with_task(const std::vector<eval::RunRecord>& runs,
                                              const std::string& task) {
  std::vector<eval::RunRecord> out;
  for (const auto& r : runs) {
    auto it = r.metrics.find(task);
    if (it != r.metrics.end() && std::isfinite(it->second)) out.push_back(r);
  }
  return out;
}

inline std::vector<std::string> settings_of(const std::vector<eval::RunRecord>& runs) {
  std::vector<std::string> out;
  for (const auto& r : runs)
    if (std::find(out.begin(), out.end(), r.setting) == out.end()) out.push_back(r.setting);
  return out;
}

inline std::vector<eval::RunRecord> in_setting(const std::vector<eval::RunRecord>& runs,
                                               const std::string& setting) {
  std::vector<eval::RunRecord> out;
  for (const auto& r : runs)
    if (r.setting == setting) out.push_back(r);
  return out;
}

inline std::vector<double> read_column(const std::string& path, const std::string& column) {
  const auto rows = io::parse_csv(io::read_file(path));
  if (rows.size() < 2) throw DataError(path + " has no data rows");
  std::size_t col = 0;
  if (!column.empty()) {
    auto it = std::find_if(rows[0].begin(), rows[0].end(),
                           [&](const std::string& h) { return io::trim(h) == column; });
    if (it == rows[0].end()) throw DataError(path + " has no column '" + column + "'");
    col = static_cast<std::size_t>(it - rows[0].begin());
  }
  std::vector<double> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() <= col) throw DataError(path + " row " + std::to_string(r) + " is short");
    out.push_back(io::parse_double(rows[r][col], "value"));
  }
  return out;
}

inline void register_eval(CLI::App& root, std::vector<Runner>& runners) {
  auto* ev = root.add_subcommand("eval", "Scaling fits, speedups, ranks and statistics");
  ev->require_subcommand(1);

  {
    struct Opts {
      std::string runs, out, grid;
      std::size_t grid_points = 50;
    };
    auto o = std::make_shared<Opts>();
    auto* app = ev->add_subcommand("fit", "Fit L = a * C^b per method and task");
    app->add_option("--runs", o->runs, "Run table CSV")->required()->check(CLI::ExistingFile);
    add_out(app, o->out, "Fits JSON");
    app->add_option("--emit-fit-grid", o->grid,
                    "CSV of fitted values on a log-spaced FLOPs grid, for plotting");
    app->add_option("--grid-points", o->grid_points, "Points per fitted curve")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
    app->footer(std::string(kRunSchema) +
                "\nFits JSON: {\"fits\": [{\"setting\", \"method\", \"task\", \"a\", "
                "\"log_a\", \"b\", \"residual\", \"points\"}]}.\nFit grid CSV: "
                "setting,method,task,flops,fitted.");
    runners.push_back({app, [o](Streams& s) {
                         std::vector<std::string> tasks;
                         const auto runs = io::runs_from_csv(io::read_file(o->runs), &tasks);
                         ordered_json fits = ordered_json::array();
                         std::string grid = "setting,method,task,flops,fitted\n";
                         for (const auto& [key, group] : group_runs(runs)) {
                           for (const auto& task : tasks) {
                             const auto pts = with_task(group, task);
                             if (pts.empty()) continue;
                             const auto fit = eval::fit_scaling(pts, task);
                             fits.push_back({{"setting", key.first},
                                             {"method", key.second},
                                             {"task", task},
                                             {"a", fit.a()},
                                             {"log_a", fit.log_a},
                                             {"b", fit.b},
                                             {"residual", fit.residual},
                                             {"points", fit.points}});
                             double lo = pts.front().flops, hi = lo;
                             for (const auto& p : pts) {
                               lo = std::min(lo, p.flops);
                               hi = std::max(hi, p.flops);
                             }
                             for (std::size_t g = 0; g < o->grid_points; ++g) {
                               const double frac =
                                   static_cast<double>(g) / static_cast<double>(o->grid_points - 1);
                               const double c =
                                   std::exp(std::log(lo) + frac * (std::log(hi) - std::log(lo)));
                               grid += io::csv_escape(key.first) + "," + io::csv_escape(key.second) +
                                       "," + io::csv_escape(task) + "," + io::format_number(c) +
                                       "," + io::format_number(fit.predict(c)) + "\n";
                             }
                           }
                         }
                         if (!o->grid.empty()) io::write_file(o->grid, grid);
                         emit(s, o->out, ordered_json{{"fits", fits}}.dump(2) + "\n",
                              "eval fit: " + std::to_string(fits.size()) + " curves");
                       }});
  }
  {
    struct Opts {
      std::string runs, baseline, out;
      double flops = 0.0;
    };
    auto o = std::make_shared<Opts>();
    auto* app = ev->add_subcommand(
        "speedup", "FLOP ratio to match the baseline's fitted metric at a reference scale");
    app->add_option("--runs", o->runs, "Run table CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--baseline", o->baseline, "Baseline method name")->required();
    app->add_option("--flops", o->flops, "Reference compute, e.g. 3e21")
        ->required()
        ->check(CLI::PositiveNumber);
    add_out(app, o->out, "Speedup JSON");
    app->footer(std::string(kRunSchema) +
                "\nSpeedup JSON: {\"baseline\", \"reference_flops\", \"speedups\": "
                "[{\"setting\", \"method\", \"task\", \"speedup\", \"warning\"?}]}. "
                "Values above 1 are speedups, below 1 slowdowns.");
    runners.push_back({app, [o](Streams& s) {
                         std::vector<std::string> tasks;
                         const auto runs = io::runs_from_csv(io::read_file(o->runs), &tasks);
                         const auto groups = group_runs(runs);
                         ordered_json rows = ordered_json::array();
                         std::size_t warnings = 0;
                         for (const auto& setting : settings_of(runs)) {
                           auto base = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
                             return g.first == std::make_pair(setting, o->baseline);
                           });
                           if (base == groups.end())
                             throw DataError("baseline '" + o->baseline + "' has no runs" +
                                             (setting.empty() ? "" : " in setting '" + setting + "'"));
                           for (const auto& [key, group] : groups) {
                             if (key.first != setting || key.second == o->baseline) continue;
                             for (const auto& task : tasks) {
                               const auto pts = with_task(group, task);
                               const auto bpts = with_task(base->second, task);
                               if (pts.empty() || bpts.empty()) continue;
                               const auto r = eval::speedup(eval::fit_scaling(pts, task),
                                                            eval::fit_scaling(bpts, task), o->flops);
                               ordered_json row{{"setting", setting},
                                                {"method", key.second},
                                                {"task", task},
                                                {"speedup", r.value}};
                               if (r.warning) {
                                 row["warning"] = *r.warning;
                                 ++warnings;
                               }
                               rows.push_back(std::move(row));
                             }
                           }
                         }
                         ordered_json j{{"baseline", o->baseline},
                                        {"reference_flops", o->flops},
                                        {"speedups", rows}};
                         emit(s, o->out, j.dump(2) + "\n",
                              "eval speedup: " + std::to_string(rows.size()) + " ratios vs " +
                                  o->baseline + ", " + std::to_string(warnings) + " warnings");
                       }});
  }
  {
    struct Opts {
      std::string runs, out;
      double flops = 0.0;
    };
    auto o = std::make_shared<Opts>();
    auto* app = ev->add_subcommand("rank", "Mean per-task rank of each method");
    app->add_option("--runs", o->runs, "Run table CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--flops", o->flops, "Compute scale for the at-scale column")
        ->required()
        ->check(CLI::PositiveNumber);
    add_out(app, o->out, "Rank JSON");
    app->footer(std::string(kRunSchema) +
                "\nRank JSON, keyed by method: {\"<method>\": {\"<setting>\": "
                "{\"mean_rank_at_scale\": r or null, \"mean_rank_all_scales\": r}}}. The "
                "setting key is \"all\" when the table has no setting column. Ties share "
                "the average rank; the all-scales column averages the per-scale mean ranks.");
    runners.push_back({app, [o](Streams& s) {
                         const auto runs = io::runs_from_csv(io::read_file(o->runs));
                         std::vector<std::string> methods;
                         for (const auto& r : runs)
                           if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
                             methods.push_back(r.method);
                         ordered_json j = ordered_json::object();
                         for (const auto& m : methods) j[m] = ordered_json::object();
                         for (const auto& setting : settings_of(runs)) {
                           const auto sub = in_setting(runs, setting);
                           std::map<std::string, double> at_scale;
                           const bool has_scale = std::any_of(sub.begin(), sub.end(), [&](const auto& r) {
                             return eval::same_scale(r.flops, o->flops);
                           });
                           if (has_scale) at_scale = eval::mean_rank(sub, o->flops);
                           const auto all = eval::mean_rank_all_scales(sub);
                           const std::string key = setting.empty() ? "all" : setting;
                           for (const auto& m : methods) {
                             if (!all.count(m)) continue;
                             ordered_json cell;
                             cell["mean_rank_at_scale"] =
                                 at_scale.count(m) ? ordered_json(at_scale.at(m)) : ordered_json();
                             cell["mean_rank_all_scales"] = all.at(m);
                             j[m][key] = cell;
                           }
                         }
                         emit(s, o->out, j.dump(2) + "\n",
                              "eval rank: " + std::to_string(methods.size()) + " methods, " +
                                  std::to_string(settings_of(runs).size()) + " settings");
                       }});
  }
  {
    struct Opts {
      std::string data, x, y, out;
    };
    auto o = std::make_shared<Opts>();
    auto* app = ev->add_subcommand("correlate", "Pearson correlation with a two-sided p-value");
    app->add_option("--data", o->data, "CSV with a header row")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--x", o->x, "Column for x")->required();
    app->add_option("--y", o->y, "Column for y")->required();
    add_out(app, o->out, "Correlation JSON");
    app->footer("Output: {\"n\", \"r\", \"p_value\"}.");
    runners.push_back({app, [o](Streams& s) {
                         const auto x = read_column(o->data, o->x);
                         const auto y = read_column(o->data, o->y);
                         const auto c = eval::pearson(x, y);
                         ordered_json j{{"n", x.size()}, {"r", c.r}, {"p_value", c.p_value}};
                         emit(s, o->out, j.dump(2) + "\n",
                              "eval correlate: r=" + fixed(c.r) + " p=" + fixed(c.p_value, 6) +
                                  " (n=" + std::to_string(x.size()) + ")");
                       }});
  }
  {
    struct Opts {
      std::string values, column, out;
      std::size_t resamples = 10000;
      std::uint64_t seed = 0;
      double confidence = 0.95;
    };
    auto o = std::make_shared<Opts>();
    auto* app = ev->add_subcommand("bootstrap", "Bootstrap distribution of the mean");
    app->add_option("--values", o->values, "CSV with a header row")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--column", o->column, "Column to use (first column by default)");
    app->add_option("--resamples", o->resamples, "Number of resamples")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--seed", o->seed, "Resampling seed")->required();
    app->add_option("--confidence", o->confidence, "Percentile interval level")
        ->capture_default_str();
    add_out(app, o->out, "Summary JSON");
    app->footer(
        "Output: {\"n\", \"mean\", \"bootstrap_mean\", \"sd\", \"ci_low\", \"ci_high\", "
        "\"confidence\", \"resamples\", \"seed\"}.");
    runners.push_back({app, [o](Streams& s) {
                         const auto v = read_column(o->values, o->column);
                         const auto b = eval::bootstrap_mean(v, o->resamples, o->seed, o->confidence);
                         ordered_json j{{"n", v.size()},
                                        {"mean", b.sample_mean},
                                        {"bootstrap_mean", b.bootstrap_mean},
                                        {"sd", b.sd},
                                        {"ci_low", b.ci_low},
                                        {"ci_high", b.ci_high},
                                        {"confidence", o->confidence},
                                        {"resamples", b.resamples},
                                        {"seed", o->seed}};
                         emit(s, o->out, j.dump(2) + "\n",
                              "eval bootstrap: mean=" + fixed(b.sample_mean) +
                                  " sd=" + fixed(b.sd, 6) + " over " +
                                  std::to_string(b.resamples) + " resamples");
                       }});
  }
}

inline void register_medu(CLI::App& root, std::vector<Runner>& runners) {
  auto* md = root.add_subcommand("medu", "LLM-estimated data utility");
  md->require_subcommand(1);
  const std::string desc_schema =
      "Description JSON: {\"benchmark\", \"description\", \"truncated\"}.";

  {
    struct Opts {
      MeduOptions medu;
      std::string benchmark, examples, out;
    };
    auto o = std::make_shared<Opts>();
    auto* app = md->add_subcommand(
        "describe", "Describe a benchmark from development examples, merging batch summaries");
    app->add_option("--benchmark", o->benchmark, "Benchmark name")->required();
    app->add_option("--examples", o->examples,
                    "Development examples JSONL (strings or {\"text\"})")
        ->required()
        ->check(CLI::ExistingFile);
    o->medu.add(app);
    add_out(app, o->out, "Description JSON");
    app->footer(std::string(kProviderSchema) + "\n" + desc_schema);
    runners.push_back({app, [o](Streams& s) {
                         auto h = load_provider(o->medu.provider);
                         medu::AuditLog log;
                         const auto cfg = o->medu.config(h.decoding, &log);
                         const auto examples = load_examples(o->examples);
                         const auto batches = medu::batch_examples(examples, cfg.max_prompt_tokens);
                         const auto d =
                             medu::describe_benchmark(o->benchmark, examples, *h.provider, cfg);
                         o->medu.flush_audit(log);
                         emit(s, o->out, d.to_json().dump(2) + "\n",
                              "medu describe: " + o->benchmark + ", " +
                                  std::to_string(examples.size()) + " examples in " +
                                  std::to_string(batches.size()) + " batches" +
                                  (d.truncated ? ", truncated" : ""));
                       }});
  }
  {
    struct Opts {
      MeduOptions medu;
      std::string description, corpus, out;
      std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    auto* app = md->add_subcommand("classify", "Label every document of a corpus for one task");
    app->add_option("--description", o->description, "Description JSON")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--corpus", o->corpus, "Corpus JSONL {\"id\", \"text\"}")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--seed", o->seed, "Chunking seed")->required();
    o->medu.add(app);
    add_out(app, o->out, "Labels JSONL");
    app->footer(std::string(kProviderSchema) + "\n" + desc_schema +
                "\nLabels JSONL: {\"id\", \"label\", \"value\"}; label and value are null "
                "when no attempt parsed.");
    runners.push_back({app, [o](Streams& s) {
                         auto h = load_provider(o->medu.provider);
                         medu::AuditLog log;
                         const auto cfg = o->medu.config(h.decoding, &log);
                         const auto desc = load_description(o->description);
                         const auto docs = io::corpus_from_jsonl(io::read_file(o->corpus));
                         std::string lines;
                         std::size_t failed = 0;
                         double total = 0.0;
                         for (std::size_t i = 0; i < docs.size(); ++i) {
                           Rng rng(derive_seed(derive_seed(o->seed, 1), i));
                           const auto chunk = medu::chunk_text(docs[i].text, cfg.chunk_max_tokens, rng);
                           const auto outcome = medu::classify_attempts(chunk, desc, *h.provider, cfg);
                           if (cfg.audit)
                             for (const auto& a : outcome.attempts)
                               log.append({{"kind", "classify"},
                                           {"document", docs[i].id},
                                           {"benchmark", desc.benchmark},
                                           {"prompt", a.prompt},
                                           {"completion", a.completion}});
                           ordered_json row{{"id", docs[i].id}};
                           if (outcome.label) {
                             row["label"] = medu::label_name(*outcome.label);
                             row["value"] = medu::label_value(*outcome.label);
                             total += medu::label_value(*outcome.label);
                           } else {
                             row["label"] = nullptr;
                             row["value"] = nullptr;
                             ++failed;
                           }
                           lines += row.dump() + "\n";
                         }
                         o->medu.flush_audit(log);
                         const std::size_t ok = docs.size() - failed;
                         emit(s, o->out, lines,
                              "medu classify: " + std::to_string(ok) + " labeled, " +
                                  std::to_string(failed) + " unparseable" +
                                  (ok ? ", mean " + fixed(total / static_cast<double>(ok)) : ""));
                       }});
  }
  {
    struct Opts {
      MeduOptions medu;
      std::vector<std::string> corpora, descriptions;
      std::string out, utilities_out;
      std::uint64_t seed = 0;
      std::size_t sample_size = 256;
    };
    auto o = std::make_shared<Opts>();
    auto* app = md->add_subcommand("score", "Mean utility label per corpus and task");
    app->add_option("--corpus", o->corpora, "NAME=PATH of a corpus JSONL; repeatable")
        ->required();
    app->add_option("--description", o->descriptions, "Description JSON per task; repeatable")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--seed", o->seed, "Sampling and chunking seed")->required();
    app->add_option("--sample-size", o->sample_size, "Documents sampled per corpus")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--utilities-out", o->utilities_out,
                    "Also write the normalized utility matrix CSV");
    o->medu.add(app);
    add_out(app, o->out, "Score CSV (higher is better)");
    app->footer(std::string(kProviderSchema) + "\n" + desc_schema +
                "\nCorpus JSONL: {\"id\", \"text\"} per document.\nScore CSV: "
                "dataset,<task>,... with mean label values; feed it to mix utilimax with "
                "--orientation higher, or feed --utilities-out with --orientation normalized.");
    runners.push_back({app, [o](Streams& s) {
                         auto h = load_provider(o->medu.provider);
                         medu::AuditLog log;
                         const auto cfg = o->medu.config(h.decoding, &log);
                         std::vector<medu::BenchmarkDescription> descs;
                         for (const auto& p : o->descriptions) descs.push_back(load_description(p));
                         std::vector<medu::CorpusScore> scores;
                         std::vector<DatasetEntry> entries;
                         std::size_t excluded = 0;
                         for (const auto& kv : o->corpora) {
                           auto [name, path] = split_pair(kv, "--corpus");
                           if (!fs::exists(path)) throw ConfigError("corpus " + path + " does not exist");
                           const auto docs = io::corpus_from_jsonl(io::read_file(path));
                           scores.push_back(medu::score_corpus(name, docs, descs, *h.provider, o->seed,
                                                               o->sample_size, cfg));
                           for (auto e : scores.back().excluded) excluded += e;
                           entries.push_back({name, docs.empty() ? 1 : docs.size()});
                         }
                         o->medu.flush_audit(log);
                         const DatasetTable table(entries);
                         std::vector<std::string> tasks;
                         for (const auto& d : descs) tasks.push_back(d.benchmark);
                         Matrix raw(scores.size(), tasks.size());
                         for (std::size_t r = 0; r < scores.size(); ++r)
                           for (std::size_t c = 0; c < tasks.size(); ++c) raw(r, c) = scores[r].scores[c];
                         if (!o->utilities_out.empty()) {
                           const auto um = medu::utility_matrix_from_scores(table, scores);
                           io::write_file(o->utilities_out,
                                          io::metric_csv_text(table.names(), tasks, um.utilities()));
                         }
                         emit(s, o->out, io::metric_csv_text(table.names(), tasks, raw),
                              "medu score: " + std::to_string(scores.size()) + " corpora x " +
                                  std::to_string(tasks.size()) + " tasks, " +
                                  std::to_string(excluded) + " excluded classifications");
                       }});
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline void print_error(std::ostream& err, const std::string& kind, const std::string& message,
                        const std::string& usage = {}) {
  ordered_json j{{"error", kind}, {"message", message}};
  if (!usage.empty()) j["usage"] = usage;
  err << j.dump() << "\n";
}

inline const CLI::App* deepest_parsed(const CLI::App& app) {
  const CLI::App* a = &app;
  while (!a->get_subcommands().empty()) a = a->get_subcommands().back();
  return a;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Data-mix toolkit: heuristic, learned and utility-optimized mixes, "
               "batch sampling, evaluation metrics and LLM utility scoring.",
               "datamix"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "TOML config file; sections name subcommands ([mix.utilimax]) and "
                 "command-line flags override it");
  std::vector<Runner> runners;
  register_mix(app, runners);
  register_learned(app, runners);
  register_sample(app, runners);
  register_eval(app, runners);
  register_medu(app, runners);

  Streams s{out, err};
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* deepest = deepest_parsed(app);
    std::string prefix = "datamix";
    std::vector<std::string> chain;
    for (const CLI::App* a = deepest->get_parent(); a && a != &app; a = a->get_parent())
      chain.insert(chain.begin(), a->get_name());
    for (const auto& n : chain) prefix += " " + n;
    out << (deepest == &app ? app.help() : deepest->help(prefix));
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* deepest = deepest_parsed(app);
    std::string path;
    for (const CLI::App* a = deepest; a && a != &app; a = a->get_parent())
      path = a->get_name() + (path.empty() ? "" : " " + path);
    const std::string usage =
        "datamix " + (path.empty() ? std::string("<command> <subcommand>") : path) +
        " [OPTIONS]; see --help";
    print_error(err, "usage_error", e.what(), usage);
    return kExitUsage;
  }

  for (auto& r : runners) {
    if (!r.app->parsed()) continue;
    try {
      r.action(s);
      return 0;
    } catch (const ConfigError& e) {
      print_error(err, e.kind(), e.what());
      return kExitUsage;
    } catch (const Error& e) {
      print_error(err, e.kind(), e.what());
      return kExitData;
    } catch (const nlohmann::json::exception& e) {
      print_error(err, "data_error", e.what());
      return kExitData;
    } catch (const std::exception& e) {
      print_error(err, "error", e.what());
      return kExitData;
    }
  }
  print_error(err, "usage_error", "no command selected",
              "datamix <command> <subcommand> [OPTIONS]; see --help");
  return kExitUsage;
}

inline int run(int argc, const char* const* argv) {
  return run(argc, argv, std::cout, std::cerr);
}

}  // namespace datamix::cli
