#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "cotpd/error.hpp"

namespace cotpd {

enum class Task { NER, RE };

inline const char* to_string(Task t) { return t == Task::NER ? "ner" : "re"; }

inline Task task_from_string(const std::string& s) {
  if (s == "ner" || s == "NER") return Task::NER;
  if (s == "re" || s == "RE") return Task::RE;
  throw ConfigError("unknown task '" + s + "' (expected ner or re)");
}

/// Half-open token range [start, end) labelled with an entity type.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;

  std::size_t length() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span& a, const Span& b) {
    return std::tie(a.start, a.end, a.type) <=> std::tie(b.start, b.end, b.type);
  }
};

/// One pre-tokenized text(+image) example with gold labels for NER or RE.
struct Sample {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::string> image_ref;
  std::optional<std::string> caption;
  Task task = Task::NER;
  std::vector<std::string> ner_tags;   // NER only, one per token
  std::optional<std::string> relation; // RE only
  std::optional<Span> head_span;
  std::optional<Span> tail_span;

  std::size_t size() const { return tokens.size(); }
  friend bool operator==(const Sample&, const Sample&) = default;
};

/// Surface string of a span, tokens joined by single spaces.
inline std::string surface(const Sample& s, const Span& span) {
  std::string out;
  for (std::size_t i = span.start; i < span.end && i < s.tokens.size(); ++i) {
    if (i > span.start) out += ' ';
    out += s.tokens[i];
  }
  return out;
}

inline void check_span(const Span& span, std::size_t n, const std::string& what) {
  if (!(span.start < span.end && span.end <= n)) {
    throw SpanRangeError(what + " span [" + std::to_string(span.start) + "," +
                         std::to_string(span.end) + ") out of range for " + std::to_string(n) +
                         " tokens");
  }
}

}  // namespace cotpd
