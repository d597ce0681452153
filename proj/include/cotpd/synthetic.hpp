#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/io.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/knowledge/templates.hpp"
#include "cotpd/text.hpp"
#include "cotpd/trainer/train.hpp"

// Synthetic NER benchmark with a controllable gap between what the text says
// and what the LLM knowledge says.
//
// Every sentence holds one ambiguous name (jordan, paris, apple, ...) whose
// type is drawn uniformly from PER/LOC/ORG/MISC. A context word from a
// type-specific list hints at the type, but only with probability
// `cue_reliability`, and it sits among filler words at a random position.
// The scripted noun knowledge names the gold type outright. A model trained
// on the knowledge view alone can lean on that clue and ignore the text; one
// that must also reproduce its predictions from text alone has to learn the
// context words.
namespace cotpd::synthetic {

inline const std::vector<std::string> kTypes{"LOC", "MISC", "ORG", "PER"};

inline const std::vector<std::string> kNames{
    "jordan", "washington", "paris",  "chelsea", "apple",  "amazon",   "phoenix", "lincoln",
    "orlando", "victoria",  "austin", "florence", "sydney", "madison", "mercury", "jaguar",
    "georgia", "savannah",  "dakota", "camden",  "houston", "raleigh", "sierra",  "boston"};

// Names only the shifted domain uses.
inline const std::vector<std::string> kShiftedNames{"denver", "milan",  "aurora", "carolina",
                                                    "tesla",  "nevada", "olympia", "preston"};

inline const std::map<std::string, std::vector<std::string>> kCues{
    {"PER", {"said", "smiled", "laughed", "married", "sang", "coached", "retired", "argued"}},
    {"LOC", {"visited", "flooded", "toured", "mapped", "snowed", "crossed", "hiked", "surveyed"}},
    {"ORG", {"hired", "merged", "sued", "acquired", "sponsored", "funded", "listed", "audited"}},
    {"MISC", {"released", "streamed", "premiered", "downloaded", "reviewed", "translated", "patched", "remixed"}}};

inline const std::map<std::string, std::string> kTypeWords{
    {"PER", "person"}, {"LOC", "place"}, {"ORG", "company"}, {"MISC", "product"}};

inline const std::vector<std::string> kFillers{"the", "a", "on", "today", "really", "just", "again", "after",
                                               "with", "we", "you", "this", "that", "now", "new", "big",
                                               "so", "very", "in", "at", "here", "still", "then", "all"};

inline const std::vector<std::string> kShiftedFillers{"lol", "omg", "tbh", "#breaking", "#news", "rt",
                                                      "u",   "ur",  "smh", "#trending", "ngl", "fr"};

inline const std::vector<std::string> kCaptions{"a group of people standing outside", "a crowded street at night",
                                                "a close up of a phone screen", "a sunny park with trees",
                                                "a stage with bright lights", "a building next to a road"};

struct Options {
  std::size_t samples = 500;
  std::uint64_t seed = 2024;
  double cue_reliability = 0.85;
  std::size_t min_fillers = 3;
  std::size_t max_fillers = 6;
  double train_fraction = 0.7;
  double dev_fraction = 0.1;
  bool style_shift = false;  // tweet-like fillers and extra names
  std::string id_prefix = "syn";
};

struct Corpus {
  std::vector<Sample> samples;
  trainer::Splits splits;
  std::map<std::string, std::string> captions;  // image_ref -> caption
  nlohmann::json script;                        // mock LLM script
};

inline std::string clue_for(const std::string& name, const std::string& type) {
  return "the word " + name + " here refers to a " + kTypeWords.at(type) + " .";
}

namespace detail {

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

inline std::string escape_regex(std::string_view sv) {
  const std::string s(sv);
  static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
  return std::regex_replace(s, special, R"(\$&)");
}

}  // namespace detail

/// Zero-shot entity list the mock LLM hands out: names outside both domains.
inline std::vector<std::pair<std::string, std::string>> zero_shot_entities() {
  return {{"kendall", "PER"},  {"marlowe", "PER"},   {"sutton", "PER"},   {"harper", "PER"},
          {"valencia", "LOC"}, {"brisbane", "LOC"},  {"toledo", "LOC"},   {"geneva", "LOC"},
          {"nokia", "ORG"},    {"oracle", "ORG"},    {"fiat", "ORG"},     {"vodafone", "ORG"},
          {"fortnite", "MISC"}, {"minecraft", "MISC"}, {"tetris", "MISC"}, {"atlantis", "MISC"}};
}

/// Mock script: exact noun rules carrying the gold-type clue for every
/// sample, then regex fallbacks for augmented text (clue from the context
/// word), sentence/multimodality background, style rewrites, fact checks,
/// imagined images and the zero-shot entity list.
inline nlohmann::json mock_script(const std::vector<Sample>& samples) {
  using knowledge::default_instruction;
  using knowledge::PromptKind;
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& s : samples) {
    auto spans = bio::decode(s.ner_tags);
    if (spans.empty()) continue;
    rules.push_back(nlohmann::json{{"exact", knowledge::render_prompt(PromptKind::NOUN, s)},
                                   {"response", clue_for(surface(s, spans.front()), spans.front().type)}});
  }
  const auto noun = detail::escape_regex(default_instruction(PromptKind::NOUN));
  auto rule = [&](std::string pattern, std::string response) {
    rules.push_back(nlohmann::json{{"regex", std::move(pattern)}, {"response", std::move(response)}});
  };
  for (const auto& [type, cues] : kCues)
    rule("^" + noun + " .*\\b(" + text::join(cues, "|") + ")\\b", "the special word here refers to a " + kTypeWords.at(type) + " .");
  rule("^" + noun, "the sentence names something .");
  rule("^" + detail::escape_regex(default_instruction(PromptKind::SENTENCE)), "this is a short post about recent events .");
  rule("^" + detail::escape_regex(default_instruction(PromptKind::MULTIMODALITY)), "the image shows the scene the post talks about .");
  rule("^" + detail::escape_regex(default_instruction(PromptKind::STYLE)) + " (.*)$", "rt $1 #news");
  // Fictional replacements fail the fact check; everything else passes.
  rule("^" + detail::escape_regex(default_instruction(PromptKind::ENTITY_FACTCHECK)) +
                                 " .*\\batlantis\\b", "No, atlantis is not a real thing.");
  rule("^" + detail::escape_regex(default_instruction(PromptKind::ENTITY_FACTCHECK)), "Yes.");
  rule("^" + detail::escape_regex(default_instruction(PromptKind::IMAGE)), "a phone photo of a busy street");
  std::string pool;
  for (const auto& [surface_text, type] : zero_shot_entities()) pool += surface_text + "\t" + type + "\n";
  rule("^Provide a list of ", pool);
  rule("^Summarize the following", "a short summary .");
  return {{"identifier", "mock:synthetic"}, {"max_context", 4096}, {"rules", rules}};
}

inline Corpus make_corpus(const Options& opt) {
  if (opt.samples == 0) throw ValidationError("synthetic corpus needs at least one sample");
  if (opt.min_fillers > opt.max_fillers) throw ValidationError("min_fillers exceeds max_fillers");
  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::string> names = kNames;
  if (opt.style_shift) names.insert(names.end(), kShiftedNames.begin(), kShiftedNames.end());
  const auto& fillers = opt.style_shift ? kShiftedFillers : kFillers;

  Corpus c;
  std::set<std::vector<std::string>> seen;  // a repeated sentence would get two conflicting clues
  std::size_t attempts = 0;
  while (c.samples.size() < opt.samples) {
    if (++attempts > 100 * opt.samples) throw ValidationError("cannot draw enough distinct synthetic sentences");
    const auto& type = detail::pick(kTypes, rng);
    const auto& name = detail::pick(names, rng);
    std::string cue_type = type;
    if (unit(rng) >= opt.cue_reliability) {
      std::vector<std::string> others;
      for (const auto& t : kTypes)
        if (t != type) others.push_back(t);
      cue_type = detail::pick(others, rng);
    }
    std::vector<std::string> words{detail::pick(kCues.at(cue_type), rng)};
    auto n_fill = std::uniform_int_distribution<std::size_t>(opt.min_fillers, opt.max_fillers)(rng);
    for (std::size_t f = 0; f < n_fill; ++f) words.push_back(detail::pick(fillers, rng));
    std::shuffle(words.begin(), words.end(), rng);
    auto at = std::uniform_int_distribution<std::size_t>(0, words.size())(rng);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), name);
    if (!seen.insert(words).second) continue;

    Sample s;
    const auto index = c.samples.size();
    s.id = opt.id_prefix + "-" + std::to_string(index);
    s.task = Task::NER;
    s.tokens = words;
    s.ner_tags = bio::encode({Span{at, at + 1, type}}, words.size());
    s.image_ref = opt.id_prefix + "-img-" + std::to_string(index);
    c.captions[*s.image_ref] = detail::pick(kCaptions, rng);
    c.samples.push_back(std::move(s));
  }
  const auto n = c.samples.size();
  const auto n_train = static_cast<std::size_t>(static_cast<double>(n) * opt.train_fraction);
  const auto n_dev = static_cast<std::size_t>(static_cast<double>(n) * opt.dev_fraction);
  c.splits.train.assign(c.samples.begin(), c.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  c.splits.dev.assign(c.samples.begin() + static_cast<std::ptrdiff_t>(n_train),
                      c.samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  c.splits.test.assign(c.samples.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), c.samples.end());
  c.script = mock_script(c.samples);
  return c;
}

/// Writes train/dev/test.txt, target.txt (a style-shifted domain of
/// `target_samples`, skipped when 0), captions.tsv and mock_llm.json.
inline void write_benchmark(const std::filesystem::path& dir, const Options& opt, std::size_t target_samples) {
  auto source = make_corpus(opt);
  std::vector<Sample> everything = source.samples;
  auto captions = source.captions;
  std::filesystem::create_directories(dir);
  corpus::write_mner(source.splits.train, dir / "train.txt");
  corpus::write_mner(source.splits.dev, dir / "dev.txt");
  corpus::write_mner(source.splits.test, dir / "test.txt");
  if (target_samples > 0) {
    auto shifted = opt;
    shifted.samples = target_samples;
    shifted.seed = opt.seed + 1;
    shifted.style_shift = true;
    shifted.id_prefix = "tgt";
    shifted.train_fraction = 0.0;
    shifted.dev_fraction = 0.0;
    auto t = make_corpus(shifted);
    corpus::write_mner(t.samples, dir / "target.txt");
    everything.insert(everything.end(), t.samples.begin(), t.samples.end());
    captions.insert(t.captions.begin(), t.captions.end());
  }
  std::ofstream cap(dir / "captions.tsv");
  for (const auto& [image, caption] : captions) cap << image << '\t' << caption << '\n';
  std::ofstream script(dir / "mock_llm.json");
  script << mock_script(everything).dump(1) << '\n';
  if (!cap || !script) throw Error("cannot write synthetic benchmark to '" + dir.string() + "'");
}

}  // namespace cotpd::synthetic
