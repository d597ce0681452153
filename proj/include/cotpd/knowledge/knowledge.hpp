#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"
#include "cotpd/knowledge/caption.hpp"
#include "cotpd/knowledge/llm.hpp"
#include "cotpd/knowledge/templates.hpp"
#include "cotpd/log.hpp"
#include "cotpd/text.hpp"

namespace cotpd::knowledge {

/// Per-sample LLM explanations plus provenance.
struct CoTKnowledge {
  std::string sample_id;
  std::string noun;
  std::string sentence;
  std::string multimodality;
  std::string caption;
  std::string llm_id;
  bool summarized = false;
  bool multimodality_skipped = false;  // sample had no image/caption
  std::vector<std::string> missing;    // fields whose query failed
  std::vector<std::string> errors;

  std::size_t token_count() const {
    return text::count_tokens(noun) + text::count_tokens(sentence) + text::count_tokens(multimodality);
  }
  bool complete() const { return missing.empty(); }
  friend bool operator==(const CoTKnowledge&, const CoTKnowledge&) = default;
};

inline nlohmann::json to_json(const CoTKnowledge& k) {
  nlohmann::json j{{"sample_id", k.sample_id},         {"noun", k.noun},
                   {"sentence", k.sentence},           {"multimodality", k.multimodality},
                   {"caption", k.caption},             {"llm_id", k.llm_id},
                   {"summarized", k.summarized},       {"multimodality_skipped", k.multimodality_skipped}};
  if (!k.missing.empty()) j["missing"] = k.missing;
  if (!k.errors.empty()) j["errors"] = k.errors;
  return j;
}

inline CoTKnowledge knowledge_from_json(const nlohmann::json& j) {
  CoTKnowledge k;
  k.sample_id = j.at("sample_id").get<std::string>();
  k.noun = j.value("noun", "");
  k.sentence = j.value("sentence", "");
  k.multimodality = j.value("multimodality", "");
  k.caption = j.value("caption", "");
  k.llm_id = j.value("llm_id", "");
  k.summarized = j.value("summarized", false);
  k.multimodality_skipped = j.value("multimodality_skipped", false);
  k.missing = j.value("missing", std::vector<std::string>{});
  k.errors = j.value("errors", std::vector<std::string>{});
  return k;
}

/// JSON-lines store of CoTKnowledge records keyed by sample id. Counts reads
/// so callers can prove a code path never consults knowledge.
class KnowledgeStore {
 public:
  KnowledgeStore() = default;

  static KnowledgeStore load(const std::filesystem::path& path) {
    KnowledgeStore store;
    std::ifstream in(path);
    if (!in) return store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      try {
        store.put(knowledge_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), line_no, e.what());
      }
    }
    return store;
  }

  void save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write knowledge store '" + path.string() + "'");
    std::lock_guard lock(mutex_);
    for (const auto& id : order_) out << to_json(records_.at(id)).dump() << '\n';
  }

  void put(CoTKnowledge k) {
    std::lock_guard lock(mutex_);
    if (!records_.contains(k.sample_id)) order_.push_back(k.sample_id);
    records_[k.sample_id] = std::move(k);
  }

  const CoTKnowledge* find(const std::string& sample_id) const {
    std::lock_guard lock(mutex_);
    ++reads_;
    auto it = records_.find(sample_id);
    return it == records_.end() ? nullptr : &it->second;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
  }
  std::size_t reads() const { return reads_; }

  KnowledgeStore(KnowledgeStore&& o) noexcept
      : records_(std::move(o.records_)), order_(std::move(o.order_)), reads_(o.reads_.load()) {}
  KnowledgeStore& operator=(KnowledgeStore&& o) noexcept {
    records_ = std::move(o.records_);
    order_ = std::move(o.order_);
    reads_ = o.reads_.load();
    return *this;
  }

 private:
  std::map<std::string, CoTKnowledge> records_;
  std::vector<std::string> order_;
  mutable std::mutex mutex_;
  mutable std::atomic<std::size_t> reads_{0};
};

/// Raised when at least one field query failed; carries the partial record.
class SynthesisError : public Error {
 public:
  SynthesisError(CoTKnowledge partial, const std::string& what) : Error(what), partial_(std::move(partial)) {}
  const CoTKnowledge& partial() const { return partial_; }

 private:
  CoTKnowledge partial_;
};

/// Instruction used when the combined knowledge exceeds its token budget.
inline constexpr std::string_view kSummarizeInstruction =
    "Summarize the following for understanding the sentence:";

/// Knowledge token budget that fits `extra_tokens` encoder positions when
/// whitespace tokens under-count subwords by up to `safety_factor`.
inline std::size_t knowledge_budget(std::size_t extra_tokens, double safety_factor = 1.3) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(extra_tokens / safety_factor)));
}

/// Collapses over-budget knowledge into a single LLM summary stored in
/// `sentence`. A summary still over budget is hard-truncated with a warning.
inline CoTKnowledge summarize_overlength(CoTKnowledge k, std::size_t budget, LlmGateway& gateway) {
  if (budget == 0) throw ValidationError("summarize_overlength: budget must be positive");
  if (k.token_count() <= budget) {
    k.summarized = false;
    return k;
  }
  std::vector<std::string> parts;
  for (const auto* f : {&k.noun, &k.sentence, &k.multimodality})
    if (!f->empty()) parts.push_back(*f);
  auto summary = gateway.query(std::string(kSummarizeInstruction) + " " + text::join(parts));
  auto n = text::count_tokens(summary);
  if (n > budget) {
    log::warn("summary for '" + k.sample_id + "' has " + std::to_string(n) + " tokens; truncating to " +
              std::to_string(budget));
    summary = text::truncate_tokens(summary, budget);
  }
  k.noun.clear();
  k.multimodality.clear();
  k.sentence = std::move(summary);
  k.summarized = true;
  return k;
}

/// Runs the NOUN, SENTENCE and (when a caption is available) MULTIMODALITY
/// prompts for one sample. Samples carrying a caption already (imagined
/// images from augmentation) are not re-captioned.
inline CoTKnowledge synthesize_knowledge(const Sample& sample, LlmGateway& gateway, CaptionService* captions,
                                         const TemplateSet& templates = TemplateSet{}) {
  CoTKnowledge k;
  k.sample_id = sample.id;
  k.llm_id = gateway.identifier();
  Sample with_caption = sample;
  auto attempt = [&](const char* field, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      k.missing.push_back(field);
      k.errors.push_back(std::string(field) + ": " + e.what());
    }
  };
  if (!with_caption.caption && with_caption.image_ref && captions)
    attempt("caption", [&] { with_caption.caption = captions->caption_image(*with_caption.image_ref); });
  k.caption = with_caption.caption.value_or("");

  attempt("noun", [&] { k.noun = gateway.query(render_prompt(PromptKind::NOUN, with_caption, templates)); });
  attempt("sentence",
          [&] { k.sentence = gateway.query(render_prompt(PromptKind::SENTENCE, with_caption, templates)); });
  if (k.caption.empty()) {
    k.multimodality_skipped = true;
  } else {
    attempt("multimodality", [&] {
      k.multimodality = gateway.query(render_prompt(PromptKind::MULTIMODALITY, with_caption, templates));
    });
  }
  if (!k.missing.empty()) throw SynthesisError(k, "knowledge synthesis for '" + sample.id + "' failed: " + k.errors.front());
  return k;
}

struct SynthesisOptions {
  std::size_t concurrency = 4;
  std::optional<std::size_t> budget;  // summarize when set
  TemplateSet templates;
};

struct SynthesisStats {
  std::size_t samples = 0;
  std::size_t failed = 0;
  std::size_t summarized = 0;
  std::size_t provider_calls = 0;
  std::size_t cache_hits = 0;
};

/// Synthesizes knowledge for every sample with up to `concurrency` workers.
/// Records (including partial ones) are put into the store in sample order.
inline SynthesisStats synthesize_corpus(const std::vector<Sample>& samples, LlmGateway& gateway,
                                        CaptionService* captions, KnowledgeStore& store,
                                        const SynthesisOptions& options = {}) {
  const auto calls_before = gateway.provider_calls();
  const auto hits_before = gateway.cache_hits();
  std::vector<CoTKnowledge> results(samples.size());
  std::vector<char> failed(samples.size(), 0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        try {
          results[i] = synthesize_knowledge(samples[i], gateway, captions, options.templates);
        } catch (const SynthesisError& e) {
          results[i] = e.partial();
          failed[i] = 1;
          log::warn(e.what());
        }
        if (options.budget) results[i] = summarize_overlength(std::move(results[i]), *options.budget, gateway);
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
      }
    }
  };
  const auto n_workers = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(samples.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (fatal) std::rethrow_exception(fatal);

  SynthesisStats stats;
  stats.samples = samples.size();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    stats.failed += failed[i];
    stats.summarized += results[i].summarized;
    store.put(std::move(results[i]));
  }
  stats.provider_calls = gateway.provider_calls() - calls_before;
  stats.cache_hits = gateway.cache_hits() - hits_before;
  return stats;
}

}  // namespace cotpd::knowledge
