#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"
#include "cotpd/text.hpp"

namespace cotpd::knowledge {

enum class PromptKind { NOUN, SENTENCE, MULTIMODALITY, STYLE, ENTITY_FACTCHECK, IMAGE };

inline constexpr std::array<PromptKind, 6> kAllPromptKinds{
    PromptKind::NOUN,  PromptKind::SENTENCE,         PromptKind::MULTIMODALITY,
    PromptKind::STYLE, PromptKind::ENTITY_FACTCHECK, PromptKind::IMAGE};

inline std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::NOUN: return "noun";
    case PromptKind::SENTENCE: return "sentence";
    case PromptKind::MULTIMODALITY: return "multimodality";
    case PromptKind::STYLE: return "style";
    case PromptKind::ENTITY_FACTCHECK: return "entity";
    case PromptKind::IMAGE: return "image";
  }
  return "?";
}

inline PromptKind prompt_kind_from_string(std::string_view s) {
  for (auto k : kAllPromptKinds)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown prompt kind '" + std::string(s) + "'");
}

struct PromptTemplate {
  PromptKind kind;
  std::string template_text;  // `{text}` and, for MULTIMODALITY, `{caption}` slots
};

/// Instruction wording of each default template, without slots.
inline std::string_view default_instruction(PromptKind k) {
  switch (k) {
    case PromptKind::NOUN: return "Help me explain the meaning of special words for understanding.";
    case PromptKind::SENTENCE: return "Explain the sentence to me with necessary background.";
    case PromptKind::MULTIMODALITY: return "What is the relation between the text and the attached image?";
    case PromptKind::STYLE: return "Transform the sentence in Twitter style without changing the meaning.";
    case PromptKind::ENTITY_FACTCHECK: return "Whether the sentence is possible in fact, answer yes or no.";
    case PromptKind::IMAGE: return "What is a possible image with the text in a tweet?";
  }
  return {};
}

inline PromptTemplate default_template(PromptKind k) {
  std::string body(default_instruction(k));
  body += k == PromptKind::MULTIMODALITY ? " {text} {caption}" : " {text}";
  return {k, body};
}

/// The six templates in use. Defaults are the fixed wordings; any of them may
/// be overridden (e.g. with more explicit descriptions for a weaker LLM).
class TemplateSet {
 public:
  TemplateSet() {
    for (auto k : kAllPromptKinds) templates_.emplace(k, default_template(k));
  }

  const PromptTemplate& get(PromptKind k) const { return templates_.at(k); }

  void set(PromptTemplate t) {
    if (t.template_text.find("{text}") == std::string::npos)
      throw ConfigError("template '" + std::string(to_string(t.kind)) + "' lacks a {text} slot");
    if (t.kind == PromptKind::MULTIMODALITY && t.template_text.find("{caption}") == std::string::npos)
      throw ConfigError("multimodality template lacks a {caption} slot");
    templates_[t.kind] = std::move(t);
  }

  /// Overrides from a JSON object {"noun": "...", "style": "...", ...}.
  static TemplateSet from_json(const nlohmann::json& j) {
    TemplateSet set;
    if (j.is_null()) return set;
    for (const auto& [key, value] : j.items())
      set.set({prompt_kind_from_string(key), value.get<std::string>()});
    return set;
  }

 private:
  std::map<PromptKind, PromptTemplate> templates_;
};

// Single left-to-right pass so slot values are never re-expanded.
inline std::string render(const PromptTemplate& t, std::string_view text_value,
                          std::string_view caption_value = {}) {
  constexpr std::string_view kText = "{text}", kCaption = "{caption}";
  const std::string& tpl = t.template_text;
  std::string out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    std::string_view rest(tpl.data() + i, tpl.size() - i);
    if (rest.starts_with(kText)) {
      out += text_value;
      i += kText.size();
    } else if (rest.starts_with(kCaption)) {
      out += caption_value;
      i += kCaption.size();
    } else {
      out += tpl[i++];
    }
  }
  return out;
}

/// Template wording followed by the sample text (tokens joined by single
/// spaces); MULTIMODALITY additionally appends the caption.
inline std::string render_prompt(PromptKind kind, const Sample& sample,
                                 const TemplateSet& templates = TemplateSet{}) {
  if (sample.tokens.empty()) throw ValidationError("render_prompt: sample '" + sample.id + "' has no tokens");
  if (kind == PromptKind::MULTIMODALITY && (!sample.caption || sample.caption->empty()))
    throw MissingCaptionError("sample '" + sample.id + "' has no caption for the multimodality prompt");
  return render(templates.get(kind), text::join(sample.tokens), sample.caption.value_or(""));
}

}  // namespace cotpd::knowledge
