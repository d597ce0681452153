#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/augment/augment.hpp"
#include "cotpd/corpus/io.hpp"

namespace cotpd::augment {

struct AugmentConfig {
  std::vector<AugmentKind> kinds{AugmentKind::STYLE, AugmentKind::ENTITY, AugmentKind::IMAGE};
  std::size_t times = 1;  // attempts per base sample and kind
  std::uint64_t seed = 13;
  EntityAugmentOptions entity;
  TemplateSet templates;
};

struct AugmentStats {
  std::size_t attempted = 0;
  std::size_t accepted = 0;
  std::size_t duplicates = 0;
  std::map<std::string, std::size_t> rejections;  // reason prefix -> count
};

struct AugmentResult {
  std::vector<AugmentedSample> samples;  // ordered by (base, kind, attempt)
  AugmentStats stats;
};

/// Generator for one (base sample, attempt) pair, independent of iteration
/// order so results do not depend on scheduling.
inline std::mt19937_64 attempt_rng(std::uint64_t seed, const std::string& base_id, std::size_t attempt) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                   static_cast<std::uint32_t>(attempt)};
  for (unsigned char c : base_id) words.push_back(c);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

/// Attempts `times` augmentations per enabled kind for every base sample and
/// keeps accepted, distinct results. Repeated style/image attempts against a
/// temperature-0 backend return identical rewrites and are dropped as
/// duplicates.
inline AugmentResult augment_corpus(const std::vector<Sample>& base, LlmGateway& gateway, const EntityPool* pool,
                                    const AugmentConfig& config) {
  AugmentResult result;
  for (const auto& sample : base) {
    for (auto kind : config.kinds) {
      std::set<std::vector<std::string>> seen_tokens;
      std::set<std::string> seen_captions;
      for (std::size_t t = 0; t < config.times; ++t) {
        ++result.stats.attempted;
        auto suffix = std::string(to_string(kind)) + std::to_string(t);
        AugmentOutcome outcome;
        switch (kind) {
          case AugmentKind::STYLE: outcome = style_augment(sample, gateway, config.templates, suffix); break;
          case AugmentKind::IMAGE: outcome = image_augment(sample, gateway, config.templates, suffix); break;
          case AugmentKind::ENTITY: {
            if (!pool) throw ConfigError("entity augmentation needs an entity pool");
            auto rng = attempt_rng(config.seed, sample.id, t);
            outcome = entity_augment(sample, *pool, gateway, rng, config.templates, suffix, config.entity);
            break;
          }
        }
        if (!outcome) {
          auto reason = outcome.rejection.substr(0, outcome.rejection.find(':'));
          ++result.stats.rejections[reason];
          continue;
        }
        auto& aug = *outcome.accepted;
        bool fresh = kind == AugmentKind::IMAGE ? seen_captions.insert(aug.sample.caption.value_or("")).second
                                                : seen_tokens.insert(aug.sample.tokens).second;
        if (!fresh) {
          ++result.stats.duplicates;
          continue;
        }
        ++result.stats.accepted;
        result.samples.push_back(std::move(aug));
      }
    }
  }
  return result;
}

inline nlohmann::json provenance_json(const AugmentedSample& a) {
  nlohmann::json j{{"id", a.sample.id}, {"base_id", a.base_id}, {"kind", to_string(a.kind)}};
  j["verdict"] = a.fact_verdict ? nlohmann::json(*a.fact_verdict == Verdict::YES ? "yes" : "no") : nlohmann::json();
  if (a.replaced)
    j["replaced"] = {{"old", a.replaced->old_text}, {"new", a.replaced->new_text}, {"type", a.replaced->type}};
  else
    j["replaced"] = nullptr;
  if (a.sample.caption) j["caption"] = *a.sample.caption;
  return j;
}

/// Writes augmented samples in the corpus format plus a JSON-lines
/// provenance sidecar.
inline void write_augmented(const std::vector<AugmentedSample>& augmented, const std::filesystem::path& corpus_path,
                            const std::filesystem::path& provenance_path, Task task) {
  std::vector<Sample> samples;
  samples.reserve(augmented.size());
  for (const auto& a : augmented) samples.push_back(a.sample);
  corpus::write_dataset(samples, corpus_path, task);
  if (provenance_path.has_parent_path()) std::filesystem::create_directories(provenance_path.parent_path());
  std::ofstream out(provenance_path, std::ios::trunc);
  if (!out) throw Error("cannot write provenance '" + provenance_path.string() + "'");
  for (const auto& a : augmented) out << provenance_json(a).dump() << '\n';
}

}  // namespace cotpd::augment

namespace cotpd::augment {

/// Loads an augmented corpus written by write_augmented, restoring sample
/// ids and imagined captions from the provenance sidecar (matched by line).
inline std::vector<Sample> load_augmented(const std::filesystem::path& corpus_path,
                                          const std::filesystem::path& provenance_path, Task task) {
  auto samples = corpus::load_dataset(corpus_path, task);
  std::ifstream in(provenance_path);
  if (!in) throw Error("cannot open provenance '" + provenance_path.string() + "'");
  std::string line;
  std::size_t i = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    if (i >= samples.size()) throw ParseError(provenance_path.string(), line_no, "more provenance lines than samples");
    auto j = nlohmann::json::parse(line);
    samples[i].id = j.at("id").get<std::string>();
    if (j.contains("caption")) samples[i].caption = j["caption"].get<std::string>();
    ++i;
  }
  if (i != samples.size()) throw ParseError(provenance_path.string(), line_no, "fewer provenance lines than samples");
  return samples;
}

}  // namespace cotpd::augment
