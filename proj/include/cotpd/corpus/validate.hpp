#pragma once

#include <string>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"

namespace cotpd {

/// Checks every Sample invariant; throws ValidationError (or SpanRangeError)
/// naming the sample on the first violation.
inline void validate(const Sample& s) {
  auto fail = [&](const std::string& why) -> void {
    throw ValidationError("sample '" + s.id + "': " + why);
  };
  if (s.tokens.empty()) fail("no tokens");
  if (s.task == Task::NER) {
    if (s.ner_tags.size() != s.tokens.size())
      fail(std::to_string(s.ner_tags.size()) + " tags for " + std::to_string(s.tokens.size()) +
           " tokens");
    if (!bio::is_valid(s.ner_tags)) fail("invalid BIO sequence");
  } else {
    if (!s.relation) fail("missing relation");
    if (!s.head_span || !s.tail_span) fail("missing head/tail span");
    check_span(*s.head_span, s.tokens.size(), "sample '" + s.id + "' head");
    check_span(*s.tail_span, s.tokens.size(), "sample '" + s.id + "' tail");
  }
}

inline bool is_valid(const Sample& s) {
  try {
    validate(s);
    return true;
  } catch (const ValidationError&) {
    return false;
  }
}

/// Entity spans of a sample: decoded BIO spans for NER, head and tail for RE.
inline std::vector<Span> entity_spans(const Sample& s) {
  if (s.task == Task::NER) return bio::decode(s.ner_tags);
  std::vector<Span> out;
  if (s.head_span) out.push_back(*s.head_span);
  if (s.tail_span) out.push_back(*s.tail_span);
  return out;
}

}  // namespace cotpd
