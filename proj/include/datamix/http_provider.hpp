#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "datamix/errors.hpp"
#include "datamix/provider.hpp"

namespace datamix {

struct HttpProviderConfig {
  // Full URL of the chat-completions route,
  // e.g. http://localhost:8000/v1/chat/completions
  std::string endpoint;
  std::string model;
  // Name of the environment variable holding the bearer token; empty for none.
  std::string api_key_env;
  int timeout_seconds = 120;
  int max_retries = 2;
  int retry_backoff_ms = 500;

  static HttpProviderConfig from_json(const nlohmann::json& j) {
    HttpProviderConfig c;
    c.endpoint = j.at("endpoint").get<std::string>();
    c.model = j.at("model").get<std::string>();
    c.api_key_env = j.value("api_key_env", std::string{});
    c.timeout_seconds = j.value("timeout_seconds", 120);
    c.max_retries = j.value("retries", 2);
    c.retry_backoff_ms = j.value("retry_backoff_ms", 500);
    if (c.timeout_seconds <= 0 || c.max_retries < 0 || c.retry_backoff_ms < 0)
      throw ConfigError("invalid HTTP provider timeouts or retry count");
    return c;
  }
};

// OpenAI-style chat-completion client: POSTs
//   {"model", "messages": [{"role": "user", "content": prompt}],
//    "temperature", "max_tokens"}
// and reads choices[0].message.content.
class HttpChatProvider : public CompletionProvider {
 public:
  explicit HttpChatProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme_end = cfg_.endpoint.find("://");
    if (scheme_end == std::string::npos)
      throw ConfigError("endpoint must include a scheme: " + cfg_.endpoint);
    const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
    origin_ = cfg_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
    if (!cfg_.api_key_env.empty()) {
      const char* key = std::getenv(cfg_.api_key_env.c_str());
      if (!key || !*key)
        throw ConfigError("environment variable " + cfg_.api_key_env +
                          " is not set");
      api_key_ = key;
    }
  }

  static nlohmann::json request_body(const std::string& model,
                                     const std::string& prompt,
                                     const DecodingParams& params) {
    return {{"model", model},
            {"messages", nlohmann::json::array(
                             {{{"role", "user"}, {"content", prompt}}})},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens}};
  }

  static std::string parse_response(const std::string& body) {
    const auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw ProviderError("provider returned invalid JSON");
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw ProviderError("provider response lacks choices[0].message.content");
    }
  }

  std::string complete(const std::string& prompt,
                       const DecodingParams& params) override {
    const std::string body = request_body(cfg_.model, prompt, params).dump();
    std::string last_error;
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0)
        std::this_thread::sleep_for(
            std::chrono::milliseconds(cfg_.retry_backoff_ms * attempt));
      httplib::Client client(origin_);
      client.set_connection_timeout(cfg_.timeout_seconds, 0);
      client.set_read_timeout(cfg_.timeout_seconds, 0);
      client.set_write_timeout(cfg_.timeout_seconds, 0);
      httplib::Headers headers;
      if (!api_key_.empty())
        headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) return parse_response(res->body);
      last_error = "HTTP status " + std::to_string(res->status);
      // Client errors other than rate limiting will not succeed on retry.
      if (res->status >= 400 && res->status < 500 && res->status != 429) break;
    }
    throw ProviderError("completion request failed: " + last_error);
  }

 private:
  HttpProviderConfig cfg_;
  std::string origin_;
  std::string path_;
  std::string api_key_;
};

}  // namespace datamix
