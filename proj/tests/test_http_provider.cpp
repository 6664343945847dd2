#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "datamix/http_provider.hpp"

using namespace datamix;

namespace {

// Local chat-completion stub on an ephemeral port.
class StubServer {
 public:
  StubServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                httplib::Response& res) {
      ++hits;
      last_body = req.body;
      last_auth = req.get_header_value("Authorization");
      if (fail_first > 0) {
        --fail_first;
        res.status = fail_status;
        return;
      }
      const auto j = nlohmann::json::parse(req.body);
      const std::string prompt = j["messages"][0]["content"];
      res.set_content(
          nlohmann::json{{"choices", {{{"message", {{"role", "assistant"},
                                                    {"content", "echo: " + prompt}}}}}}}
              .dump(),
          "application/json");
    });
    server_.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"choices\": []}", "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& path) const {
    return "http://127.0.0.1:" + std::to_string(port_) + path;
  }

  std::atomic<int> hits{0};
  std::atomic<int> fail_first{0};
  int fail_status = 503;
  std::string last_body, last_auth;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpProviderConfig config(const std::string& endpoint) {
  HttpProviderConfig c;
  c.endpoint = endpoint;
  c.model = "test-model";
  c.timeout_seconds = 5;
  c.retry_backoff_ms = 1;
  return c;
}

}  // namespace

TEST(HttpChatProvider, SendsChatRequestAndReadsContent) {
  StubServer s;
  HttpChatProvider p(config(s.url("/v1/chat/completions")));
  EXPECT_EQ(p.complete("hello", DecodingParams{0.0, 16}), "echo: hello");
  const auto body = nlohmann::json::parse(s.last_body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["max_tokens"], 16);
  EXPECT_EQ(body["temperature"], 0.0);
  EXPECT_EQ(s.last_auth, "");
}

TEST(HttpChatProvider, BearerTokenFromEnvironment) {
  StubServer s;
  ::setenv("DATAMIX_TEST_KEY", "sekrit", 1);
  auto c = config(s.url("/v1/chat/completions"));
  c.api_key_env = "DATAMIX_TEST_KEY";
  HttpChatProvider p(c);
  p.complete("x", {});
  EXPECT_EQ(s.last_auth, "Bearer sekrit");
  c.api_key_env = "DATAMIX_TEST_KEY_UNSET";
  ::unsetenv("DATAMIX_TEST_KEY_UNSET");
  EXPECT_THROW(HttpChatProvider{c}, ConfigError);
}

TEST(HttpChatProvider, RetriesServerErrors) {
  StubServer s;
  s.fail_first = 2;
  HttpChatProvider p(config(s.url("/v1/chat/completions")));
  EXPECT_EQ(p.complete("again", {}), "echo: again");
  EXPECT_EQ(s.hits.load(), 3);
}

TEST(HttpChatProvider, GivesUpAfterRetries) {
  StubServer s;
  s.fail_first = 10;
  HttpChatProvider p(config(s.url("/v1/chat/completions")));
  EXPECT_THROW(p.complete("x", {}), ProviderError);
  EXPECT_EQ(s.hits.load(), 3);  // 1 + 2 retries
}

TEST(HttpChatProvider, ClientErrorsAreNotRetried) {
  StubServer s;
  s.fail_first = 10;
  s.fail_status = 400;
  HttpChatProvider p(config(s.url("/v1/chat/completions")));
  EXPECT_THROW(p.complete("x", {}), ProviderError);
  EXPECT_EQ(s.hits.load(), 1);
}

TEST(HttpChatProvider, MalformedResponses) {
  StubServer s;
  HttpChatProvider p(config(s.url("/broken")));
  EXPECT_THROW(p.complete("x", {}), ProviderError);
  EXPECT_THROW(HttpChatProvider::parse_response("not json"), ProviderError);
  EXPECT_THROW(HttpChatProvider{config("localhost/no-scheme")}, ConfigError);
}

TEST(HttpChatProvider, ConnectionRefused) {
  int port;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  auto c = config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
  c.max_retries = 0;
  HttpChatProvider p(c);
  EXPECT_THROW(p.complete("x", {}), ProviderError);
}

TEST(HttpProviderConfig, FromJson) {
  const auto c = HttpProviderConfig::from_json(nlohmann::json::parse(
      R"({"endpoint":"http://h/v1","model":"m","retries":5,"timeout_seconds":9})"));
  EXPECT_EQ(c.max_retries, 5);
  EXPECT_EQ(c.timeout_seconds, 9);
  EXPECT_THROW(HttpProviderConfig::from_json(
                   nlohmann::json::parse(R"({"endpoint":"http://h","model":"m","retries":-1})")),
               ConfigError);
}
