#pragma once

// HTTP clients for the optional live backends: a chat-completion LLM and an
// embedding service. Nothing here is used in offline mode.

#include <chrono>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diagnosys/embed.hpp"
#include "diagnosys/error.hpp"
#include "diagnosys/llm.hpp"

namespace diagnosys {

inline constexpr const char* kLlmTokenEnv = "DIAGNOSYS_LLM_TOKEN";

/// Splits "http://host:port/prefix" into the origin httplib wants and a path
/// prefix without trailing slash.
inline std::pair<std::string, std::string> split_base_url(std::string_view url) {
  auto scheme = url.find("://");
  auto path_start = url.find('/', scheme == std::string_view::npos ? 0 : scheme + 3);
  if (path_start == std::string_view::npos) return {std::string(url), ""};
  std::string prefix(url.substr(path_start));
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {std::string(url.substr(0, path_start)), prefix};
}

inline std::optional<std::string> llm_token_from_env() {
  const char* v = std::getenv(kLlmTokenEnv);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// POST {base_url}/chat, retried with exponential backoff (250 ms, doubling)
/// on transport errors and 5xx answers.
class HttpLlmProvider final : public LlmProvider {
 public:
  HttpLlmProvider(LlmConfig config, std::optional<std::string> token, Sleeper sleep = real_sleep)
      : config_(std::move(config)), token_(std::move(token)), sleep_(std::move(sleep)) {
    config_.validate();
  }

  static nlohmann::json request_body(const LlmConfig& c, const std::string& prompt) {
    return {{"model", c.model},
            {"temperature", c.temperature},
            {"max_tokens", c.max_tokens},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
  }

  std::string complete(const std::string& prompt) override {
    auto [origin, prefix] = split_base_url(config_.base_url);
    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (token_) headers.emplace("Authorization", "Bearer " + *token_);
    const std::string body = request_body(config_, prompt).dump();

    std::string last_error = "no attempt made";
    auto delay = std::chrono::milliseconds(250);
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
      if (attempt > 0) {
        sleep_(delay);
        delay *= 2;
      }
      auto res = client.Post(prefix + "/chat", headers, body, "application/json");
      if (!res) {
        last_error = httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw Error(ErrorCode::provider_unavailable, "HTTP " + std::to_string(res->status));
      auto j = nlohmann::json::parse(res->body, nullptr, false);
      if (j.is_discarded() || !j.contains("content") || !j["content"].is_string())
        throw Error(ErrorCode::provider_unavailable, "malformed response body");
      return j["content"].get<std::string>();
    }
    throw Error(ErrorCode::provider_unavailable, last_error);
  }

 private:
  LlmConfig config_;
  std::optional<std::string> token_;
  Sleeper sleep_;
};

/// POST {base_url}/embed with {"texts":[...]} -> {"vectors":[[...]]}.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  explicit RemoteEmbedder(std::string base_url, std::chrono::milliseconds timeout = std::chrono::seconds(10))
      : base_url_(std::move(base_url)), timeout_(timeout) {}

  std::string mode() const override { return "remote-service"; }

  EmbeddingVector embed(std::string_view text) const override { return embed_batch({std::string(text)}).front(); }

  std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override {
    auto [origin, prefix] = split_base_url(base_url_);
    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    client.set_connection_timeout(secs.count(), 0);
    client.set_read_timeout(secs.count(), 0);
    auto res = client.Post(prefix + "/embed", nlohmann::json{{"texts", texts}}.dump(), "application/json");
    if (!res) throw Error(ErrorCode::remote_unavailable, httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::remote_unavailable, "HTTP " + std::to_string(res->status));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded() || !j.contains("vectors") || !j["vectors"].is_array() || j["vectors"].size() != texts.size())
      throw Error(ErrorCode::remote_unavailable, "malformed response body");
    std::vector<EmbeddingVector> out;
    for (const auto& v : j["vectors"]) {
      std::vector<double> values;
      for (const auto& x : v) {
        if (!x.is_number()) throw Error(ErrorCode::remote_unavailable, "non-numeric vector component");
        values.push_back(x.get<double>());
      }
      out.emplace_back(std::move(values));
    }
    return out;
  }

 private:
  std::string base_url_;
  std::chrono::milliseconds timeout_;
};

}  // namespace diagnosys
