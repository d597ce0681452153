#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"
#include "cotpd/log.hpp"
#include "cotpd/text.hpp"

namespace cotpd::knowledge {

/// Append-only JSON-lines response cache keyed by (namespace, hash(key)).
/// The namespace is a backend or caption-provider identifier. Each line
/// carries the full key so hash collisions are detected on lookup.
class ResponseCache {
 public:
  ResponseCache() = default;

  explicit ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        entries_[slot(j.at("ns").get<std::string>(), j.at("hash").get<std::string>())] =
            Entry{j.at("key").get<std::string>(), j.at("value").get<std::string>()};
      } catch (const nlohmann::json::exception&) {
        // A torn final line from an interrupted run; the entry is simply re-fetched.
        log::warn("cache " + path_->string() + ":" + std::to_string(line_no) + ": skipping unreadable entry");
      }
    }
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    out_.open(*path_, std::ios::app);
    if (!out_) throw Error("cannot open cache '" + path_->string() + "' for appending");
  }

  ResponseCache(const ResponseCache&) = delete;
  ResponseCache& operator=(const ResponseCache&) = delete;

  std::optional<std::string> lookup(const std::string& ns, const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(slot(ns, text::fnv1a_hex(key)));
    if (it == entries_.end() || it->second.key != key) return std::nullopt;
    return it->second.value;
  }

  void store(const std::string& ns, const std::string& key, const std::string& value) {
    std::lock_guard lock(mutex_);
    auto hash = text::fnv1a_hex(key);
    entries_[slot(ns, hash)] = Entry{key, value};
    if (out_.is_open()) {
      out_ << nlohmann::json{{"ns", ns}, {"hash", hash}, {"key", key}, {"value", value}}.dump() << '\n';
      out_.flush();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  struct Entry {
    std::string key;
    std::string value;
  };
  static std::string slot(const std::string& ns, const std::string& hash) { return ns + '\x1f' + hash; }

  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Entry> entries_;
};

}  // namespace cotpd::knowledge
