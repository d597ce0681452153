#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "cotpd/net.hpp"
#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"
#include "cotpd/knowledge/cache.hpp"
#include "cotpd/knowledge/retry.hpp"
#include "cotpd/text.hpp"

namespace cotpd::knowledge {

/// A text-completion provider queried at temperature 0.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Backend + model identifier; namespaces the response cache.
  virtual std::string identifier() const = 0;
  /// Context window in whitespace tokens.
  virtual std::size_t max_context() const = 0;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Offline backend answering from a JSON script of pattern -> response rules.
///
/// Script format:
///   {"identifier": "mock:demo", "max_context": 4096,
///    "rules": [{"exact": "<prompt>", "response": "..."},
///              {"regex": "Messi", "response": "Messi is a footballer [PER]"}],
///    "default": "optional fallback"}
/// A bare object {"<regex>": "<response>", ...} is accepted as shorthand.
/// Exact rules are consulted first, then regex rules in order (regex_search);
/// regex responses may reference capture groups as $1, $2, ...
class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(const nlohmann::json& script, std::string fallback_id = "mock:script") {
    nlohmann::json rules = nlohmann::json::array();
    if (script.is_object() && script.contains("rules")) {
      rules = script["rules"];
      identifier_ = script.value("identifier", fallback_id);
      max_context_ = script.value("max_context", std::size_t{4096});
      if (script.contains("default") && !script["default"].is_null())
        default_ = script["default"].get<std::string>();
    } else if (script.is_object()) {
      identifier_ = fallback_id;
      for (const auto& [pattern, response] : script.items())
        rules.push_back({{"regex", pattern}, {"response", response}});
    } else if (script.is_array()) {
      identifier_ = fallback_id;
      rules = script;
    } else {
      throw ConfigError("mock script must be a JSON object or array");
    }
    for (const auto& r : rules) {
      auto response = r.at("response").get<std::string>();
      if (r.contains("exact")) {
        exact_.emplace(r["exact"].get<std::string>(), std::move(response));
      } else if (r.contains("regex")) {
        try {
          regex_.push_back({std::regex(r["regex"].get<std::string>()), std::move(response)});
        } catch (const std::regex_error& e) {
          throw ConfigError("bad regex in mock script '" + r["regex"].get<std::string>() + "': " + e.what());
        }
      } else {
        throw ConfigError("mock rule needs an 'exact' or 'regex' key");
      }
    }
  }

  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open mock script '" + path.string() + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path.string(), 0, e.what());
    }
    return std::make_shared<ScriptedBackend>(j, "mock:" + path.stem().string());
  }

  std::string identifier() const override { return identifier_; }
  std::size_t max_context() const override { return max_context_; }
  void set_max_context(std::size_t n) { max_context_ = n; }

  std::string complete(const std::string& prompt) override {
    ++calls_;
    if (auto it = exact_.find(prompt); it != exact_.end()) return it->second;
    for (const auto& [re, response] : regex_) {
      std::smatch m;
      if (std::regex_search(prompt, m, re)) return m.format(response);
    }
    if (default_) return *default_;
    throw LookupError("mock script has no rule matching prompt: " + prompt.substr(0, 120));
  }

  std::size_t calls() const { return calls_; }

 private:
  struct RegexRule {
    std::regex pattern;
    std::string response;
  };
  std::string identifier_;
  std::size_t max_context_ = 4096;
  std::unordered_map<std::string, std::string> exact_;
  std::vector<RegexRule> regex_;
  std::optional<std::string> default_;
  std::atomic<std::size_t> calls_{0};
};

/// Endpoint of an OpenAI-compatible chat-completions service.
struct HttpEndpoint {
  std::string name;
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;  // read at request time; keys never live in config files
  int timeout_s = 60;
  std::size_t max_context = 8192;

  static HttpEndpoint from_json(const std::string& name, const nlohmann::json& j) {
    HttpEndpoint e;
    e.name = name;
    e.base_url = j.at("url").get<std::string>();
    e.path = j.value("path", e.path);
    e.model = j.value("model", std::string());
    e.api_key_env = j.value("api_key_env", std::string());
    e.timeout_s = j.value("timeout_s", e.timeout_s);
    e.max_context = j.value("max_context", e.max_context);
    return e;
  }
};

class HttpChatBackend : public LlmBackend {
 public:
  explicit HttpChatBackend(HttpEndpoint endpoint) : ep_(std::move(endpoint)) {}

  std::string identifier() const override { return "http:" + ep_.name + ":" + ep_.model; }
  std::size_t max_context() const override { return ep_.max_context; }

  std::string complete(const std::string& prompt) override {
    httplib::Client client(ep_.base_url);
    client.set_connection_timeout(ep_.timeout_s, 0);
    client.set_read_timeout(ep_.timeout_s, 0);
    httplib::Headers headers;
    if (!ep_.api_key_env.empty()) {
      const char* key = std::getenv(ep_.api_key_env.c_str());
      if (!key) throw ConfigError("environment variable " + ep_.api_key_env + " is not set");
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    nlohmann::json body{{"model", ep_.model},
                        {"temperature", 0},
                        {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    auto res = client.Post(ep_.path, headers, body.dump(), "application/json");
    if (!res) throw TransientFailure("request to " + ep_.base_url + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429) throw RateLimited("rate limited by " + ep_.base_url);
    if (res->status >= 500) throw TransientFailure(ep_.base_url + " returned HTTP " + std::to_string(res->status));
    if (res->status != 200) throw Error(ep_.base_url + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("unexpected response from " + ep_.base_url + ": " + e.what());
    }
  }

 private:
  HttpEndpoint ep_;
};

struct GatewayOptions {
  RetryOptions retry;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds min_interval{0};
};

/// Cached, rate-limited access to one backend. Safe to share across threads.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<LlmBackend> backend, std::shared_ptr<ResponseCache> cache = nullptr,
             GatewayOptions options = {})
      : backend_(std::move(backend)),
        cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
        options_(options),
        limiter_(options.max_in_flight, options.min_interval) {}

  /// Returns the backend's temperature-0 response, serving repeats from the cache.
  std::string query(const std::string& prompt) {
    if (text::trim(prompt).empty()) throw ValidationError("query_llm: empty prompt");
    auto tokens = text::count_tokens(prompt);
    if (tokens > backend_->max_context()) throw ContextOverflowError(tokens, backend_->max_context());
    const auto ns = backend_->identifier();
    if (auto hit = cache_->lookup(ns, prompt)) {
      ++cache_hits_;
      return *hit;
    }
    std::size_t attempt = 0;
    while (true) {
      try {
        std::string response;
        {
          RateLimiter::Permit permit(limiter_);
          ++provider_calls_;
          response = backend_->complete(prompt);
        }
        cache_->store(ns, prompt, response);
        return response;
      } catch (const RateLimited& e) {
        if (attempt >= options_.retry.max_retries)
          throw RateLimitError(std::string(e.what()) + " (gave up after " + std::to_string(attempt + 1) + " attempts)",
                               attempt + 1);
      } catch (const TransientFailure& e) {
        if (attempt >= options_.retry.max_retries) throw TransportError(e.what(), attempt);
      }
      std::this_thread::sleep_for(options_.retry.delay(attempt));
      ++attempt;
    }
  }

  const LlmBackend& backend() const { return *backend_; }
  std::string identifier() const { return backend_->identifier(); }
  std::size_t provider_calls() const { return provider_calls_; }
  std::size_t cache_hits() const { return cache_hits_; }

 private:
  std::shared_ptr<LlmBackend> backend_;
  std::shared_ptr<ResponseCache> cache_;
  GatewayOptions options_;
  RateLimiter limiter_;
  std::atomic<std::size_t> provider_calls_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

/// Free-function form of LlmGateway::query.
inline std::string query_llm(LlmGateway& gateway, const std::string& prompt) { return gateway.query(prompt); }

}  // namespace cotpd::knowledge
