#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include "cotpd/net.hpp"
#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"
#include "cotpd/knowledge/cache.hpp"
#include "cotpd/knowledge/retry.hpp"
#include "cotpd/text.hpp"

namespace cotpd::knowledge {

/// Turns an image reference into a one-sentence caption.
class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string identifier() const = 0;
  /// Throws LookupError for unknown refs, TransientFailure when unreachable.
  virtual std::string caption(const std::string& image_ref) = 0;
};

/// Precomputed captions, one `id<TAB>caption` per line.
class FileCaptionProvider : public CaptionProvider {
 public:
  explicit FileCaptionProvider(const std::filesystem::path& path) : id_("file:" + path.stem().string()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open caption file '" + path.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(path.string(), line_no, "expected `id<TAB>caption`");
      captions_[text::trim(line.substr(0, tab))] = text::trim(line.substr(tab + 1));
    }
  }

  std::string identifier() const override { return id_; }
  std::string caption(const std::string& image_ref) override {
    auto it = captions_.find(image_ref);
    if (it == captions_.end()) throw LookupError("no caption for image '" + image_ref + "'");
    return it->second;
  }

 private:
  std::string id_;
  std::map<std::string, std::string> captions_;
};

/// In-memory captions for tests; can be told to fail the first k calls.
class ScriptedCaptionProvider : public CaptionProvider {
 public:
  explicit ScriptedCaptionProvider(std::map<std::string, std::string> captions, std::size_t failures = 0,
                                   std::string id = "mock:captions")
      : captions_(std::move(captions)), failures_left_(failures), id_(std::move(id)) {}

  std::string identifier() const override { return id_; }
  std::string caption(const std::string& image_ref) override {
    ++calls_;
    if (failures_left_ > 0) {
      --failures_left_;
      throw TransientFailure("caption provider unreachable");
    }
    auto it = captions_.find(image_ref);
    if (it == captions_.end()) throw LookupError("no caption for image '" + image_ref + "'");
    return it->second;
  }
  std::size_t calls() const { return calls_; }

 private:
  std::map<std::string, std::string> captions_;
  std::atomic<std::size_t> failures_left_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

/// External captioner: POST {"image": ref} to url+path, expects {"caption": "..."}.
class HttpCaptionProvider : public CaptionProvider {
 public:
  HttpCaptionProvider(std::string name, std::string base_url, std::string path = "/caption", int timeout_s = 60)
      : name_(std::move(name)), base_url_(std::move(base_url)), path_(std::move(path)), timeout_s_(timeout_s) {}

  std::string identifier() const override { return "http:" + name_; }
  std::string caption(const std::string& image_ref) override {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_s_, 0);
    client.set_read_timeout(timeout_s_, 0);
    auto res = client.Post(path_, nlohmann::json{{"image", image_ref}}.dump(), "application/json");
    if (!res) throw TransientFailure("caption endpoint " + base_url_ + " unreachable");
    if (res->status == 404) throw LookupError("captioner does not know image '" + image_ref + "'");
    if (res->status != 200) throw TransientFailure(base_url_ + " returned HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body).at("caption").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error("unexpected caption response: " + std::string(e.what()));
    }
  }

 private:
  std::string name_, base_url_, path_;
  int timeout_s_;
};

/// Cached captioning with bounded retries.
class CaptionService {
 public:
  CaptionService(std::shared_ptr<CaptionProvider> provider, std::shared_ptr<ResponseCache> cache = nullptr,
                 RetryOptions retry = {})
      : provider_(std::move(provider)),
        cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
        retry_(retry) {}

  std::string caption_image(const std::string& image_ref) {
    const auto ns = "caption:" + provider_->identifier();
    if (auto hit = cache_->lookup(ns, image_ref)) return *hit;
    for (std::size_t attempt = 0;; ++attempt) {
      try {
        ++provider_calls_;
        auto caption = provider_->caption(image_ref);
        cache_->store(ns, image_ref, caption);
        return caption;
      } catch (const TransientFailure& e) {
        if (attempt >= retry_.max_retries) throw TransportError(e.what(), attempt);
      }
      std::this_thread::sleep_for(retry_.delay(attempt));
    }
  }

  std::size_t provider_calls() const { return provider_calls_; }

 private:
  std::shared_ptr<CaptionProvider> provider_;
  std::shared_ptr<ResponseCache> cache_;
  RetryOptions retry_;
  std::atomic<std::size_t> provider_calls_{0};
};

}  // namespace cotpd::knowledge
