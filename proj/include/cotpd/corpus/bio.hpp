#pragma once

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"

namespace cotpd::bio {

enum class Prefix { O, B, I };

struct Tag {
  Prefix prefix = Prefix::O;
  std::string type;
};

/// Parses "O", "B-t" or "I-t". Throws ValidationError on anything else.
inline Tag parse_tag(std::string_view tag) {
  if (tag == "O") return {};
  if (tag.size() >= 3 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I')) {
    return {tag[0] == 'B' ? Prefix::B : Prefix::I, std::string(tag.substr(2))};
  }
  throw ValidationError("malformed BIO tag '" + std::string(tag) + "'");
}

inline bool is_well_formed(std::string_view tag) {
  return tag == "O" || (tag.size() >= 3 && tag[1] == '-' && (tag[0] == 'B' || tag[0] == 'I'));
}

/// An I-t is legal only directly after B-t or I-t.
inline bool is_valid(const std::vector<std::string>& tags) {
  std::string open;  // type of the currently open span, empty if none
  for (const auto& t : tags) {
    if (!is_well_formed(t)) return false;
    auto tag = parse_tag(t);
    if (tag.prefix == Prefix::I && tag.type != open) return false;
    open = tag.prefix == Prefix::O ? std::string() : tag.type;
  }
  return true;
}

/// Rewrites every illegal I-t to B-t. Returns the number of tags changed.
inline std::size_t repair(std::vector<std::string>& tags) {
  std::size_t changed = 0;
  std::string open;
  for (auto& t : tags) {
    auto tag = parse_tag(t);
    if (tag.prefix == Prefix::I && tag.type != open) {
      t = "B-" + tag.type;
      ++changed;
    }
    open = tag.prefix == Prefix::O ? std::string() : tag.type;
  }
  return changed;
}

/// Maximal B-t I-t* runs, ordered by start. An illegal I-t opens a new span,
/// which is what repair() would have produced.
inline std::vector<Span> decode(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    auto tag = parse_tag(tags[i]);
    if (tag.prefix == Prefix::O) continue;
    bool continues = tag.prefix == Prefix::I && !spans.empty() && spans.back().end == i &&
                     spans.back().type == tag.type;
    if (continues) {
      spans.back().end = i + 1;
    } else {
      spans.push_back({i, i + 1, tag.type});
    }
  }
  return spans;
}

/// Inverse of decode for non-overlapping spans.
inline std::vector<std::string> encode(const std::vector<Span>& spans, std::size_t n) {
  std::vector<std::string> tags(n, "O");
  for (const auto& s : spans) {
    check_span(s, n, "entity");
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (tags[i] != "O") throw ValidationError("overlapping spans cannot be BIO encoded");
      tags[i] = (i == s.start ? "B-" : "I-") + s.type;
    }
  }
  return tags;
}

inline std::vector<std::string> entity_types(const std::vector<std::string>& tags) {
  std::vector<std::string> types;
  for (const auto& t : tags) {
    auto tag = parse_tag(t);
    if (tag.prefix != Prefix::O && std::find(types.begin(), types.end(), tag.type) == types.end())
      types.push_back(tag.type);
  }
  return types;
}

}  // namespace cotpd::bio
