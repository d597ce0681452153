#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"

namespace cotpd::model {

/// Distillation variant: conditional prompt (CPD), unconditional prompt
/// (UPD), input prefix (PREFIXD), multi-view alignment (MV) or none.
enum class Variant { CPD, UPD, PREFIXD, MV, NONE };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::CPD: return "cpd";
    case Variant::UPD: return "upd";
    case Variant::PREFIXD: return "prefixd";
    case Variant::MV: return "mv";
    case Variant::NONE: return "none";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (auto v : {Variant::CPD, Variant::UPD, Variant::PREFIXD, Variant::MV, Variant::NONE})
    if (s == to_string(v)) return v;
  throw ConfigError("unknown variant '" + s + "' (expected cpd|upd|prefixd|mv|none)");
}

inline bool has_prompt(Variant v) { return v == Variant::CPD || v == Variant::UPD || v == Variant::PREFIXD; }

enum class PredictMode { KNOWLEDGE, PROMPT, TEXT_ONLY };

inline const char* to_string(PredictMode m) {
  switch (m) {
    case PredictMode::KNOWLEDGE: return "knowledge";
    case PredictMode::PROMPT: return "prompt";
    case PredictMode::TEXT_ONLY: return "text_only";
  }
  return "?";
}

inline PredictMode predict_mode_from_string(const std::string& s) {
  for (auto m : {PredictMode::KNOWLEDGE, PredictMode::PROMPT, PredictMode::TEXT_ONLY})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown mode '" + s + "' (expected knowledge|prompt|text_only)");
}

struct StudentConfig {
  std::size_t d = 32;              // embedding width
  std::size_t n_max = 64;          // max text tokens
  std::size_t extra_tokens = 64;   // l: positions beyond the text (caption, knowledge, prompt)
  std::size_t prompt_length = 8;   // N learnable queries
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn = 64;
  double alpha = 1.0;
  Variant variant = Variant::CPD;
  bool detach_teacher = false;
  bool use_knowledge = true;       // false: knowledge view reduces to [x; I]
  std::uint64_t seed = 7;

  std::size_t context() const { return n_max + extra_tokens; }

  void validate() const {
    if (d == 0 || heads == 0 || d % heads != 0) throw ConfigError("d must be a positive multiple of heads");
    if (prompt_length == 0) throw ConfigError("prompt_length (N) must be >= 1");
    if (alpha < 0) throw ConfigError("alpha must be >= 0");
    if (n_max == 0 || layers == 0 || ffn == 0) throw ConfigError("n_max, layers and ffn must be positive");
    if (has_prompt(variant) && extra_tokens < prompt_length)
      throw ConfigError("extra_tokens must be >= prompt_length so [x; p] fits the encoder context");
  }
};

inline nlohmann::json to_json(const StudentConfig& c) {
  return {{"d", c.d},
          {"n_max", c.n_max},
          {"extra_tokens", c.extra_tokens},
          {"prompt_length", c.prompt_length},
          {"layers", c.layers},
          {"heads", c.heads},
          {"ffn", c.ffn},
          {"alpha", c.alpha},
          {"variant", to_string(c.variant)},
          {"detach_teacher", c.detach_teacher},
          {"use_knowledge", c.use_knowledge},
          {"seed", c.seed}};
}

inline StudentConfig student_config_from_json(const nlohmann::json& j) {
  StudentConfig c;
  if (j.is_null()) return c;
  try {
    c.d = j.value("d", c.d);
    c.n_max = j.value("n_max", c.n_max);
    c.extra_tokens = j.value("extra_tokens", c.extra_tokens);
    c.prompt_length = j.value("prompt_length", c.prompt_length);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.alpha = j.value("alpha", c.alpha);
    c.variant = variant_from_string(j.value("variant", std::string(to_string(c.variant))));
    c.detach_teacher = j.value("detach_teacher", c.detach_teacher);
    c.use_knowledge = j.value("use_knowledge", c.use_knowledge);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace cotpd::model
