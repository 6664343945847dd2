#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "datamix/errors.hpp"
#include "datamix/rng.hpp"

namespace datamix {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 512;
};

// Text-in, text-out LLM endpoint. Implementations must tolerate concurrent
// calls to complete().
class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const std::string& prompt,
                               const DecodingParams& params) = 0;
};

// Replays canned completions. Lookup order: exact prompt key (FNV-1a 64 of
// the prompt bytes, hex), then the first rule whose `contains` substring
// occurs in the prompt, then the fallback.
//
// Table JSON:
//   { "responses": { "<prompt key>": "text", ... },
//     "rules": [ { "contains": "...", "response": "..." }, ... ],
//     "default": "text" }
class MockProvider : public CompletionProvider {
 public:
  struct Rule {
    std::string contains;
    std::string response;
  };

  MockProvider() = default;
  MockProvider(std::map<std::string, std::string> responses,
               std::vector<Rule> rules = {},
               std::optional<std::string> fallback = std::nullopt)
      : responses_(std::move(responses)),
        rules_(std::move(rules)),
        fallback_(std::move(fallback)) {}

  MockProvider(const MockProvider& other)
      : responses_(other.responses_),
        rules_(other.rules_),
        fallback_(other.fallback_) {}

  static std::string prompt_key(std::string_view prompt) {
    return hex64(fnv1a64(prompt));
  }

  static MockProvider from_json(const nlohmann::json& j) {
    MockProvider p;
    if (!j.is_object()) throw DataError("mock table must be a JSON object");
    if (j.contains("responses")) {
      for (const auto& [k, v] : j.at("responses").items()) {
        if (!v.is_string()) throw DataError("mock response must be a string");
        p.responses_[k] = v.get<std::string>();
      }
    }
    if (j.contains("rules")) {
      for (const auto& r : j.at("rules")) {
        if (!r.contains("contains") || !r.contains("response"))
          throw DataError("mock rule needs 'contains' and 'response'");
        p.rules_.push_back(
            {r.at("contains").get<std::string>(), r.at("response").get<std::string>()});
      }
    }
    if (j.contains("default")) p.fallback_ = j.at("default").get<std::string>();
    return p;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["responses"] = responses_;
    j["rules"] = nlohmann::json::array();
    for (const auto& r : rules_)
      j["rules"].push_back({{"contains", r.contains}, {"response", r.response}});
    if (fallback_) j["default"] = *fallback_;
    return j;
  }

  void add_response(std::string_view prompt, std::string response) {
    responses_[prompt_key(prompt)] = std::move(response);
  }
  void add_rule(std::string contains, std::string response) {
    rules_.push_back({std::move(contains), std::move(response)});
  }
  void set_default(std::string response) { fallback_ = std::move(response); }

  std::string complete(const std::string& prompt,
                       const DecodingParams& /*params*/) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    if (auto it = responses_.find(prompt_key(prompt)); it != responses_.end())
      return it->second;
    for (const auto& r : rules_)
      if (prompt.find(r.contains) != std::string::npos) return r.response;
    if (fallback_) return *fallback_;
    throw ProviderError("mock provider has no response for prompt " +
                        prompt_key(prompt));
  }

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::map<std::string, std::string> responses_;
  std::vector<Rule> rules_;
  std::optional<std::string> fallback_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace datamix
