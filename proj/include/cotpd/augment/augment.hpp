#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/corpus/validate.hpp"
#include "cotpd/error.hpp"
#include "cotpd/knowledge/llm.hpp"
#include "cotpd/knowledge/templates.hpp"
#include "cotpd/log.hpp"
#include "cotpd/text.hpp"

namespace cotpd::augment {

using knowledge::LlmGateway;
using knowledge::PromptKind;
using knowledge::TemplateSet;

enum class AugmentKind { STYLE, ENTITY, IMAGE };
enum class Verdict { YES, NO };

inline const char* to_string(AugmentKind k) {
  switch (k) {
    case AugmentKind::STYLE: return "style";
    case AugmentKind::ENTITY: return "entity";
    case AugmentKind::IMAGE: return "image";
  }
  return "?";
}

inline AugmentKind augment_kind_from_string(const std::string& s) {
  if (s == "style") return AugmentKind::STYLE;
  if (s == "entity") return AugmentKind::ENTITY;
  if (s == "image") return AugmentKind::IMAGE;
  throw ConfigError("unknown augmentation kind '" + s + "'");
}

struct Replacement {
  std::string old_text;
  std::string new_text;
  std::string type;
  friend bool operator==(const Replacement&, const Replacement&) = default;
};

struct AugmentedSample {
  std::string base_id;
  AugmentKind kind = AugmentKind::STYLE;
  Sample sample;
  std::optional<Verdict> fact_verdict;
  std::optional<Replacement> replaced;
};

/// Either an accepted sample or a rejection reason. A fact-check rejection
/// still carries the verdict.
struct AugmentOutcome {
  std::optional<AugmentedSample> accepted;
  std::string rejection;
  std::optional<Verdict> fact_verdict;

  explicit operator bool() const { return accepted.has_value(); }

  static AugmentOutcome accept(AugmentedSample s) {
    AugmentOutcome o;
    o.fact_verdict = s.fact_verdict;
    o.accepted = std::move(s);
    return o;
  }
  static AugmentOutcome reject(std::string why, std::optional<Verdict> verdict = std::nullopt) {
    AugmentOutcome o;
    o.rejection = std::move(why);
    o.fact_verdict = verdict;
    return o;
  }
};

namespace detail {

inline std::vector<std::size_t> find_all(const std::vector<std::string>& haystack,
                                         const std::vector<std::string>& needle) {
  std::vector<std::size_t> hits;
  if (needle.empty() || needle.size() > haystack.size()) return hits;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i)))
      hits.push_back(i);
  return hits;
}

inline Sample derived(const Sample& base, const std::string& suffix) {
  Sample s = base;
  s.id = base.id + "#" + suffix;
  return s;
}

}  // namespace detail

/// Rewrites the sentence in a new style and rebuilds labels by locating each
/// gold entity surface as an exact token run in the response. Any surface
/// found a different number of times than it occurs in the gold is rejected.
inline AugmentOutcome style_augment(const Sample& sample, LlmGateway& gateway, const TemplateSet& templates = {},
                                    const std::string& id_suffix = "style0") {
  auto response = gateway.query(knowledge::render_prompt(PromptKind::STYLE, sample, templates));
  auto tokens = text::split_whitespace(response);
  if (tokens.empty()) return AugmentOutcome::reject("empty rewrite");

  auto gold = entity_spans(sample);
  std::map<std::string, std::vector<std::size_t>> by_surface;  // surface -> gold span indices
  for (std::size_t i = 0; i < gold.size(); ++i) by_surface[surface(sample, gold[i])].push_back(i);

  std::vector<Span> rebuilt(gold.size());
  std::vector<char> taken(tokens.size(), 0);
  for (const auto& [surf, indices] : by_surface) {
    auto hits = detail::find_all(tokens, text::split_whitespace(surf));
    if (hits.empty()) return AugmentOutcome::reject("entity not found: " + surf);
    if (hits.size() != indices.size()) return AugmentOutcome::reject("ambiguous match: " + surf);
    auto len = text::split_whitespace(surf).size();
    for (std::size_t h = 0; h < hits.size(); ++h) {
      for (std::size_t t = hits[h]; t < hits[h] + len; ++t) {
        if (taken[t]) return AugmentOutcome::reject("overlapping entity matches: " + surf);
        taken[t] = 1;
      }
      rebuilt[indices[h]] = Span{hits[h], hits[h] + len, gold[indices[h]].type};
    }
  }

  Sample out = detail::derived(sample, id_suffix);
  out.tokens = std::move(tokens);
  if (sample.task == Task::NER) {
    std::sort(rebuilt.begin(), rebuilt.end());
    out.ner_tags = bio::encode(rebuilt, out.tokens.size());
  } else {
    out.head_span = rebuilt.at(0);
    out.tail_span = rebuilt.at(1);
  }
  validate(out);
  return AugmentOutcome::accept({sample.id, AugmentKind::STYLE, std::move(out), std::nullopt, std::nullopt});
}

/// True when the first word of `answer`, lowercased and stripped of
/// punctuation, is "yes".
inline bool is_affirmative(const std::string& answer) {
  auto words = text::split_whitespace(answer);
  if (words.empty()) return false;
  std::string w;
  for (unsigned char c : words.front())
    if (!std::ispunct(c)) w += static_cast<char>(std::tolower(c));
  return w == "yes";
}

/// Entity surfaces by type. `zero_shot` pools must not share any surface
/// (case-insensitive) with the source dataset.
struct EntityPool {
  enum class Origin { IN_DOMAIN, ZERO_SHOT };
  std::map<std::string, std::vector<std::string>> entries;
  Origin origin = Origin::IN_DOMAIN;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, v] : entries) n += v.size();
    return n;
  }
  void add(const std::string& type, const std::string& surface) {
    auto& v = entries[type];
    if (std::find(v.begin(), v.end(), surface) == v.end()) v.push_back(surface);
  }
};

/// Lowercased entity surfaces of a dataset.
inline std::set<std::string> entity_surfaces(const std::vector<Sample>& dataset) {
  std::set<std::string> out;
  for (const auto& s : dataset)
    for (const auto& span : entity_spans(s)) out.insert(text::lower(surface(s, span)));
  return out;
}

/// In-domain pool built from the gold entities of a dataset.
inline EntityPool build_in_domain_pool(const std::vector<Sample>& dataset) {
  EntityPool pool;
  for (const auto& s : dataset)
    for (const auto& span : entity_spans(s)) pool.add(span.type, surface(s, span));
  return pool;
}

/// Throws ValidationError if a zero-shot pool overlaps the source entities.
inline void check_disjoint(const EntityPool& pool, const std::vector<Sample>& source) {
  if (pool.origin != EntityPool::Origin::ZERO_SHOT) return;
  auto known = entity_surfaces(source);
  for (const auto& [type, surfaces] : pool.entries)
    for (const auto& s : surfaces)
      if (known.contains(text::lower(s)))
        throw ValidationError("zero-shot pool entity '" + s + "' [" + type + "] occurs in the source dataset");
}

struct EntityAugmentOptions {
  std::size_t replacements = 1;  // entities replaced per augmented sample
};

/// Replaces one uniformly drawn gold entity by a same-type pool entity,
/// shifts the remaining labels, and keeps the result only if the fact-check
/// prompt is answered "yes".
inline AugmentOutcome entity_augment(const Sample& sample, const EntityPool& pool, LlmGateway& gateway,
                                     std::mt19937_64& rng, const TemplateSet& templates = {},
                                     const std::string& id_suffix = "entity0",
                                     const EntityAugmentOptions& options = {}) {
  auto spans = entity_spans(sample);
  if (spans.empty()) return AugmentOutcome::reject("no entity to replace");

  Sample out = detail::derived(sample, id_suffix);
  std::optional<Replacement> first_replacement;
  std::vector<std::size_t> order(spans.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t done = 0;
  std::vector<Span> current = spans;  // tracks positions in `out`
  for (std::size_t pick : order) {
    if (done >= std::max<std::size_t>(options.replacements, 1)) break;
    const Span target = current[pick];
    for (std::size_t j = 0; j < current.size(); ++j)
      if (j != pick && current[j].start < target.end && target.start < current[j].end)
        return AugmentOutcome::reject("overlapping entity spans");
    auto old_text = surface(out, target);
    auto it = pool.entries.find(target.type);
    std::vector<std::string> candidates;
    if (it != pool.entries.end())
      for (const auto& c : it->second)
        if (text::lower(c) != text::lower(old_text) && !text::split_whitespace(c).empty()) candidates.push_back(c);
    if (candidates.empty()) {
      if (options.replacements <= 1) return AugmentOutcome::reject("no pool entity of type " + target.type);
      continue;
    }
    std::uniform_int_distribution<std::size_t> draw(0, candidates.size() - 1);
    const auto& replacement = candidates[draw(rng)];
    auto new_tokens = text::split_whitespace(replacement);

    std::vector<std::string> tokens(out.tokens.begin(), out.tokens.begin() + static_cast<std::ptrdiff_t>(target.start));
    tokens.insert(tokens.end(), new_tokens.begin(), new_tokens.end());
    tokens.insert(tokens.end(), out.tokens.begin() + static_cast<std::ptrdiff_t>(target.end), out.tokens.end());
    const auto delta = static_cast<std::ptrdiff_t>(new_tokens.size()) - static_cast<std::ptrdiff_t>(target.length());
    for (auto& s : current) {
      if (s.start == target.start) {
        s.end = s.start + new_tokens.size();
      } else if (s.start >= target.end) {
        s.start = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s.start) + delta);
        s.end = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(s.end) + delta);
      }
    }
    out.tokens = std::move(tokens);
    if (!first_replacement) first_replacement = Replacement{old_text, replacement, target.type};
    ++done;
  }
  if (done == 0) return AugmentOutcome::reject("no pool entity of a matching type");

  if (sample.task == Task::NER) {
    out.ner_tags = bio::encode(current, out.tokens.size());
  } else {
    out.head_span = current.at(0);
    out.tail_span = current.at(1);
  }
  validate(out);

  auto answer = gateway.query(knowledge::render_prompt(PromptKind::ENTITY_FACTCHECK, out, templates));
  if (!is_affirmative(answer)) return AugmentOutcome::reject("fact check answered: " + text::trim(answer), Verdict::NO);
  return AugmentOutcome::accept({sample.id, AugmentKind::ENTITY, std::move(out), Verdict::YES, first_replacement});
}

/// Asks the LLM to imagine an image for the text; the answer becomes the
/// new sample's caption while tokens and labels stay unchanged.
inline AugmentOutcome image_augment(const Sample& sample, LlmGateway& gateway, const TemplateSet& templates = {},
                                    const std::string& id_suffix = "image0") {
  auto response = text::trim(gateway.query(knowledge::render_prompt(PromptKind::IMAGE, sample, templates)));
  if (response.empty()) return AugmentOutcome::reject("empty imagination");
  Sample out = detail::derived(sample, id_suffix);
  out.caption = response;
  out.image_ref.reset();
  return AugmentOutcome::accept({sample.id, AugmentKind::IMAGE, std::move(out), std::nullopt, std::nullopt});
}

/// Prompt asking for novel entities. `round` and the already collected
/// surfaces make re-queries distinct under a temperature-0 cache.
inline std::string render_pool_prompt(std::size_t count, const std::vector<std::string>& types, std::size_t round,
                                      const std::vector<std::string>& exclude) {
  std::string prompt = "Provide a list of " + std::to_string(count) + " Twitter entities covering the types " +
                       text::join(types, ", ") +
                       ". Answer with one entity per line formatted as `surface<TAB>type`.";
  if (round > 0) {
    prompt += " Round " + std::to_string(round + 1) + "; do not repeat:";
    for (const auto& e : exclude) prompt += " " + e + ";";
  }
  return prompt;
}

/// Queries the LLM for `count` entities over `types`, drops any surface seen
/// in `source`, and re-queries up to three more rounds while short.
inline EntityPool build_zero_shot_pool(LlmGateway& gateway, std::size_t count, const std::vector<std::string>& types,
                                       const std::vector<Sample>& source) {
  if (count == 0) throw ValidationError("build_zero_shot_pool: count must be positive");
  if (types.empty()) throw ValidationError("build_zero_shot_pool: no entity types given");
  const auto known = entity_surfaces(source);
  EntityPool pool;
  pool.origin = EntityPool::Origin::ZERO_SHOT;
  std::set<std::string> seen;
  std::vector<std::string> collected;
  constexpr std::size_t kExtraRounds = 3;
  for (std::size_t round = 0; round <= kExtraRounds && pool.size() < count; ++round) {
    auto response = gateway.query(render_pool_prompt(count - pool.size(), types, round, collected));
    std::size_t line_no = 0;
    for (const auto& raw : text::split(response, '\n')) {
      ++line_no;
      auto line = text::trim(raw);
      if (line.empty()) continue;
      auto cols = text::split(line, '\t');
      if (cols.size() != 2)
        throw ParseError("<zero-shot pool response>", line_no, "expected `surface<TAB>type`, got: " + line);
      auto surf = text::trim(cols[0]);
      auto type = text::trim(cols[1]);
      if (surf.empty() || std::find(types.begin(), types.end(), type) == types.end())
        throw ParseError("<zero-shot pool response>", line_no, "unknown entity type '" + type + "'");
      auto key = text::lower(surf);
      if (known.contains(key) || !seen.insert(key).second) continue;
      if (pool.size() >= count) break;
      pool.add(type, surf);
      collected.push_back(surf);
    }
  }
  if (pool.size() < count)
    log::warn("zero-shot pool has " + std::to_string(pool.size()) + " of " + std::to_string(count) + " entities");
  return pool;
}

}  // namespace cotpd::augment
