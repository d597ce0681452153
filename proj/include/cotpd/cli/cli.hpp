#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cotpd/augment/augment.hpp"
#include "cotpd/augment/corpus_augment.hpp"
#include "cotpd/corpus/io.hpp"
#include "cotpd/error.hpp"
#include "cotpd/knowledge/cache.hpp"
#include "cotpd/knowledge/caption.hpp"
#include "cotpd/knowledge/knowledge.hpp"
#include "cotpd/knowledge/llm.hpp"
#include "cotpd/knowledge/templates.hpp"
#include "cotpd/log.hpp"
#include "cotpd/model/checkpoint.hpp"
#include "cotpd/text.hpp"
#include "cotpd/trainer/experiments.hpp"
#include "cotpd/trainer/train.hpp"

namespace cotpd::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Raised for problems with the command line or config file; maps to exit 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Flags {
  std::string verb;
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> llm, caption, task, mode, variant, split, input, model_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> alpha;
  std::optional<std::string> times, sizes;
};

/// Sets a dotted key ("train.model.alpha") in a JSON object. The value is
/// parsed as JSON when possible and kept as a string otherwise.
inline void apply_override(json& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  const auto raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  json* node = &cfg;
  for (const auto& part : text::split(key, '.')) {
    if (part.empty()) throw UsageError("bad --set key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
  }
  *node = std::move(value);
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const std::string& flag) {
  std::vector<std::size_t> out;
  for (const auto& part : text::split(s, ',')) {
    auto p = text::trim(part);
    if (p.empty()) continue;
    try {
      std::size_t used = 0;
      long long v = std::stoll(p, &used);
      if (used != p.size() || v < 0) throw std::invalid_argument(p);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError(flag + " expects comma-separated non-negative integers, got '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError(flag + " is empty");
  return out;
}

/// Parsed config plus everything derived from it that the verbs share.
class Context {
 public:
  Context(const Flags& flags, std::ostream& out) : flags_(flags), out_(out) {
    if (!flags.config.empty()) {
      std::ifstream in(flags.config);
      if (!in) throw UsageError("cannot open config '" + flags.config + "'");
      cfg_ = json::parse(in, nullptr, false);
      if (cfg_.is_discarded() || !cfg_.is_object()) throw UsageError("config '" + flags.config + "' is not a JSON object");
      base_dir_ = fs::absolute(flags.config).parent_path();
    } else {
      cfg_ = json::object();
      base_dir_ = fs::current_path();
    }
    for (const auto& s : flags.sets) apply_override(cfg_, s);
    if (flags.task) cfg_["task"] = *flags.task;
    if (flags.seed) cfg_["train"]["seed"] = *flags.seed;
    if (flags.alpha) cfg_["train"]["model"]["alpha"] = *flags.alpha;
    if (flags.variant) {
      auto names = text::split(*flags.variant, ',');
      if (names.size() == 1) {
        cfg_["train"]["model"]["variant"] = names.front();
        cfg_.erase("variants");
      } else {
        cfg_["variants"] = names;
      }
    }
    if (flags.times) cfg_["curve"]["times"] = parse_size_list(*flags.times, "--times");
    if (flags.sizes) cfg_["curve"]["sizes"] = parse_size_list(*flags.sizes, "--sizes");
    if (flags.llm) cfg_["llm"] = *flags.llm;
    if (flags.caption) cfg_["caption"] = *flags.caption;

    try {
      task_ = task_from_string(cfg_.value("task", std::string("ner")));
      train_ = trainer::train_config_from_json(cfg_.value("train", json::object()));
      train_.validate();
      if (cfg_.contains("variants"))
        for (const auto& v : cfg_["variants"]) variants_.push_back(model::variant_from_string(v.get<std::string>()));
      templates_ = knowledge::TemplateSet::from_json(cfg_.value("templates", json::object()));
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: ") + e.what());
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
    work_dir_ = flags.out_dir ? fs::path(*flags.out_dir) : resolve(cfg_.value("work_dir", std::string("run")));
  }

  const json& config() const { return cfg_; }
  Task task() const { return task_; }
  const trainer::TrainConfig& train_config() const { return train_; }
  const std::vector<model::Variant>& variants() const { return variants_; }
  const knowledge::TemplateSet& templates() const { return templates_; }
  const fs::path& work_dir() const { return work_dir_; }
  std::ostream& out() { return out_; }
  const Flags& flags() const { return flags_; }

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    return (path.is_absolute() ? path : base_dir_ / path).lexically_normal();
  }

  fs::path work_file(const std::string& key, const std::string& fallback) const {
    if (cfg_.contains("paths") && cfg_["paths"].contains(key)) return resolve(cfg_["paths"][key].get<std::string>());
    return work_dir_ / fallback;
  }

  std::string corpus_extension() const { return task_ == Task::NER ? ".txt" : ".jsonl"; }
  fs::path knowledge_path() const { return work_file("knowledge", "knowledge.jsonl"); }
  fs::path cache_path() const { return work_file("cache", "cache.jsonl"); }
  fs::path augmented_path() const { return work_file("augmented", "augmented" + corpus_extension()); }
  fs::path provenance_path() const { return work_file("provenance", "augmented.provenance.jsonl"); }
  fs::path model_path() const { return flags_.model_path ? fs::path(*flags_.model_path) : work_file("model", "model.json"); }

  std::vector<Sample> load_split(const std::string& name, bool required) const {
    const auto data = cfg_.value("data", json::object());
    if (!data.contains(name)) {
      if (required) throw ConfigError("config has no data." + name + " path");
      return {};
    }
    auto path = resolve(data[name].get<std::string>());
    auto samples = corpus::load_dataset(path, task_);
    attach_captions(samples);
    return samples;
  }

  trainer::Splits load_splits() const {
    return {load_split("train", true), load_split("dev", false), load_split("test", false)};
  }

  bool use_augmented() const { return cfg_.value("augment", json::object()).value("use", false); }

  std::vector<Sample> load_augmented_samples() const {
    if (!fs::exists(augmented_path())) {
      throw ConfigError("augment.use is set but " + augmented_path().string() + " does not exist; run `augment` first");
    }
    return augment::load_augmented(augmented_path(), provenance_path(), task_);
  }

  std::shared_ptr<knowledge::ResponseCache> cache() {
    if (!cache_) cache_ = std::make_shared<knowledge::ResponseCache>(cache_path());
    return cache_;
  }

  bool has_llm() const { return cfg_.contains("llm") && cfg_["llm"].is_string() && !cfg_["llm"].get<std::string>().empty(); }

  knowledge::LlmGateway& gateway() {
    if (gateway_) return *gateway_;
    if (!has_llm()) throw ConfigError("this verb needs an LLM: pass --llm mock:<file> or --llm http:<endpoint>");
    const auto spec = cfg_["llm"].get<std::string>();
    std::shared_ptr<knowledge::LlmBackend> backend;
    if (spec.rfind("mock:", 0) == 0) {
      auto path = spec.substr(5);
      backend = knowledge::ScriptedBackend::from_file(flags_.llm ? fs::path(path) : resolve(path));
    } else if (spec.rfind("http:", 0) == 0) {
      backend = std::make_shared<knowledge::HttpChatBackend>(endpoint(spec.substr(5)));
    } else {
      throw ConfigError("--llm must be mock:<file> or http:<endpoint-name>, got '" + spec + "'");
    }
    knowledge::GatewayOptions opts;
    const auto k = cfg_.value("knowledge", json::object());
    opts.max_in_flight = k.value("max_in_flight", opts.max_in_flight);
    opts.retry.max_retries = k.value("max_retries", opts.retry.max_retries);
    opts.retry.backoff_base = std::chrono::milliseconds(k.value("backoff_ms", opts.retry.backoff_base.count()));
    gateway_.emplace(std::move(backend), cache(), opts);
    return *gateway_;
  }

  /// nullptr for `--caption none` or when no captioner is configured.
  knowledge::CaptionService* captions() {
    if (captions_) return &*captions_;
    const auto spec = cfg_.value("caption", std::string("none"));
    if (spec == "none" || spec.empty()) return nullptr;
    std::shared_ptr<knowledge::CaptionProvider> provider;
    if (spec.rfind("file:", 0) == 0) {
      auto path = spec.substr(5);
      provider = std::make_shared<knowledge::FileCaptionProvider>(flags_.caption ? fs::path(path) : resolve(path));
    } else if (spec.rfind("http:", 0) == 0) {
      auto ep = endpoint(spec.substr(5));
      provider = std::make_shared<knowledge::HttpCaptionProvider>(ep.name, ep.base_url,
                                                                  ep.path.empty() ? "/caption" : ep.path, ep.timeout_s);
    } else {
      throw ConfigError("--caption must be file:<path>, http:<endpoint-name> or none, got '" + spec + "'");
    }
    captions_.emplace(std::move(provider), cache());
    return &*captions_;
  }

  knowledge::KnowledgeStore& store() {
    if (!store_) store_ = std::make_unique<knowledge::KnowledgeStore>(knowledge::KnowledgeStore::load(knowledge_path()));
    return *store_;
  }
  bool store_loaded() const { return static_cast<bool>(store_); }
  /// Provider calls made so far; 0 when no gateway was ever opened.
  std::size_t provider_calls() const { return gateway_ ? gateway_->provider_calls() : 0; }

  knowledge::SynthesisOptions synthesis_options() const {
    knowledge::SynthesisOptions o;
    const auto k = cfg_.value("knowledge", json::object());
    o.concurrency = k.value("concurrency", o.concurrency);
    if (k.value("summarize", true)) o.budget = knowledge::knowledge_budget(train_.model.extra_tokens);
    o.templates = templates_;
    return o;
  }

  trainer::KnowledgeSource knowledge_source() {
    trainer::KnowledgeSource src;
    src.gateway = has_llm() ? &gateway() : nullptr;
    src.captions = captions();
    src.store = &store();
    src.options = synthesis_options();
    return src;
  }

  augment::AugmentConfig augment_config() const {
    augment::AugmentConfig ac;
    const auto a = cfg_.value("augment", json::object());
    if (a.contains("kinds")) {
      ac.kinds.clear();
      for (const auto& k : a["kinds"]) ac.kinds.push_back(augment::augment_kind_from_string(k.get<std::string>()));
    }
    ac.times = a.value("times", ac.times);
    ac.seed = a.value("seed", ac.seed);
    ac.entity.replacements = a.value("replacements", ac.entity.replacements);
    ac.templates = templates_;
    return ac;
  }

  /// Writes a JSON file under the work dir, creating it as needed.
  void write_json(const fs::path& path, const json& j) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream o(path, std::ios::trunc);
    if (!o) throw Error("cannot write '" + path.string() + "'");
    o << j.dump(2) << '\n';
  }

  void write_text(const fs::path& path, const std::string& s) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream o(path, std::ios::trunc);
    if (!o) throw Error("cannot write '" + path.string() + "'");
    o << s;
  }

 private:
  knowledge::HttpEndpoint endpoint(const std::string& name) const {
    const auto eps = cfg_.value("endpoints", json::object());
    if (!eps.contains(name)) throw ConfigError("no endpoint named '" + name + "' under \"endpoints\" in the config");
    return knowledge::HttpEndpoint::from_json(name, eps[name]);
  }

  void attach_captions(std::vector<Sample>& samples) const {
    // Captions known up front (data.captions: image_ref<TAB>caption) are
    // copied onto samples; others come from the captioner at synthesis time.
    const auto data = cfg_.value("data", json::object());
    if (!data.contains("captions")) return;
    knowledge::FileCaptionProvider file(resolve(data["captions"].get<std::string>()));
    for (auto& s : samples) {
      if (s.caption || !s.image_ref) continue;
      try {
        s.caption = file.caption(*s.image_ref);
      } catch (const LookupError&) {
      }
    }
  }

  Flags flags_;
  std::ostream& out_;
  json cfg_;
  fs::path base_dir_;
  fs::path work_dir_;
  Task task_ = Task::NER;
  trainer::TrainConfig train_;
  std::vector<model::Variant> variants_;
  knowledge::TemplateSet templates_;
  std::shared_ptr<knowledge::ResponseCache> cache_;
  std::optional<knowledge::LlmGateway> gateway_;
  std::optional<knowledge::CaptionService> captions_;
  std::unique_ptr<knowledge::KnowledgeStore> store_;
};

inline json f1_json(const F1Report& r) { return cotpd::to_json(r); }

inline json modes_json(const trainer::ModeReports& m) {
  json j = json::object();
  for (const auto& [mode, r] : m) j[model::to_string(mode)] = r.f1;
  return j;
}

inline std::string mode_table(const trainer::ModeReports& m, const std::string& title) {
  std::ostringstream os;
  os << title << "\nmode          P       R      F1\n";
  for (const auto& [mode, r] : m) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%-10s %6.2f  %6.2f  %6.2f\n", model::to_string(mode), 100 * r.precision,
                  100 * r.recall, 100 * r.f1);
    os << buf;
  }
  return os.str();
}

inline void emit(Context& ctx, const json& summary, const std::string& table) {
  ctx.out() << summary.dump() << '\n';
  if (!table.empty()) ctx.out() << table;
  ctx.out().flush();
}

// ---------------------------------------------------------------------------
// Verbs

inline int cmd_synthesize(Context& ctx) {
  auto splits = ctx.load_splits();
  std::vector<Sample> all = splits.train;
  all.insert(all.end(), splits.dev.begin(), splits.dev.end());
  all.insert(all.end(), splits.test.begin(), splits.test.end());
  auto src = ctx.knowledge_source();
  if (!src.gateway) throw ConfigError("synthesize needs --llm");
  auto before = src.store->size();
  auto stats = trainer::ensure_knowledge(all, src);
  src.store->save(ctx.knowledge_path());
  json summary{{"verb", "synthesize"},
               {"samples", all.size()},
               {"synthesized", stats.samples},
               {"already_stored", before},
               {"failed", stats.failed},
               {"summarized", stats.summarized},
               {"provider_calls", stats.provider_calls},
               {"cache_hits", stats.cache_hits},
               {"store", ctx.knowledge_path().string()}};
  std::ostringstream t;
  t << "samples " << all.size() << ", newly synthesized " << stats.samples << ", failed " << stats.failed
    << ", summarized " << stats.summarized << ", provider calls " << stats.provider_calls << "\n";
  emit(ctx, summary, t.str());
  return kExitOk;
}

inline int cmd_augment(Context& ctx) {
  auto splits = ctx.load_splits();
  auto ac = ctx.augment_config();
  if (ctx.flags().times) ac.times = parse_size_list(*ctx.flags().times, "--times").front();
  auto& gw = ctx.gateway();
  const auto a = ctx.config().value("augment", json::object());
  const auto pool_kind = a.value("pool", std::string("in_domain"));
  augment::EntityPool pool;
  if (pool_kind == "in_domain") {
    pool = augment::build_in_domain_pool(splits.train);
  } else if (pool_kind == "zero_shot") {
    auto types = trainer::label_types(splits.train);
    pool = augment::build_zero_shot_pool(gw, a.value("zero_shot_count", std::size_t{400}),
                                         std::vector<std::string>(types.begin(), types.end()), splits.train);
    augment::check_disjoint(pool, splits.train);
  } else {
    throw ConfigError("augment.pool must be in_domain or zero_shot, got '" + pool_kind + "'");
  }
  auto result = augment::augment_corpus(splits.train, gw, &pool, ac);
  augment::write_augmented(result.samples, ctx.augmented_path(), ctx.provenance_path(), ctx.task());

  // Knowledge for the new samples, so training stays offline.
  std::vector<Sample> fresh;
  for (const auto& s : result.samples) fresh.push_back(s.sample);
  auto src = ctx.knowledge_source();
  auto stats = trainer::ensure_knowledge(fresh, src);
  src.store->save(ctx.knowledge_path());

  json rejections = json::object();
  for (const auto& [reason, n] : result.stats.rejections) rejections[reason] = n;
  json summary{{"verb", "augment"},
               {"base_samples", splits.train.size()},
               {"attempted", result.stats.attempted},
               {"accepted", result.stats.accepted},
               {"duplicates", result.stats.duplicates},
               {"rejections", rejections},
               {"pool", pool_kind},
               {"pool_size", pool.size()},
               {"knowledge_synthesized", stats.samples},
               {"output", ctx.augmented_path().string()}};
  std::ostringstream t;
  t << "attempted " << result.stats.attempted << ", accepted " << result.stats.accepted << ", duplicates "
    << result.stats.duplicates << "\n";
  for (const auto& [reason, n] : result.stats.rejections) t << "  rejected (" << reason << "): " << n << "\n";
  emit(ctx, summary, t.str());
  return kExitOk;
}

inline trainer::Splits training_data(Context& ctx) {
  auto splits = ctx.load_splits();
  if (ctx.use_augmented()) {
    auto extra = ctx.load_augmented_samples();
    splits.train.insert(splits.train.end(), extra.begin(), extra.end());
  }
  return splits;
}

inline int cmd_train(Context& ctx) {
  auto data = training_data(ctx);
  const auto& cfg = ctx.train_config();
  const knowledge::KnowledgeStore* store = cfg.model.use_knowledge ? &ctx.store() : nullptr;

  if (ctx.variants().size() > 1) {
    auto report = trainer::compare_variants(cfg, ctx.variants(), data, store);
    const auto path = ctx.work_file("variants", "variants.json");
    ctx.write_json(path, report.to_json(false));
    json rows = json::array();
    for (const auto& r : report.rows)
      rows.push_back({{"variant", model::to_string(r.variant)},
                      {"deployment_mode", model::to_string(r.deployment)},
                      {"test_f1", r.deployed_f1(r.report.test)},
                      {"dev_f1", r.deployed_f1(r.report.dev)}});
    emit(ctx, {{"verb", "train"}, {"variants", rows}, {"warnings", report.warnings}, {"report", path.string()}},
         report.table());
    return kExitOk;
  }

  std::optional<trainer::TrainResult> best;
  double best_score = -1.0;
  json seeds = json::array();
  for (std::size_t k = 0; k < cfg.seeds; ++k) {
    auto c = cfg;
    c.seed = cfg.seed + k;
    auto grid = trainer::grid_search(c, data, store);
    const auto suffix = cfg.seeds > 1 ? "-seed" + std::to_string(c.seed) : std::string();
    ctx.write_json(ctx.work_dir() / ("report" + suffix + ".json"), grid.runs[grid.best].to_json(false));
    if (grid.runs.size() > 1) {
      json g = json::array();
      for (const auto& r : grid.runs) g.push_back({{"learning_rate", r.learning_rate}, {"dev_f1", trainer::selection_score(r)}});
      ctx.write_json(ctx.work_dir() / ("grid" + suffix + ".json"), g);
    }
    const double score = trainer::selection_score(grid.runs[grid.best]);
    seeds.push_back({{"seed", c.seed}, {"dev_f1", score}, {"test", modes_json(grid.runs[grid.best].test)}});
    if (score > best_score) {
      best_score = score;
      best.emplace(std::move(*grid.best_run));
    }
  }
  model::save_checkpoint(best->model, ctx.model_path());
  const auto& r = best->report;
  json summary{{"verb", "train"},
               {"variant", model::to_string(best->model.config().variant)},
               {"selection_mode", model::to_string(r.selection_mode)},
               {"best_epoch", r.best_epoch},
               {"learning_rate", r.learning_rate},
               {"train_samples", r.train_samples},
               {"dev", modes_json(r.dev)},
               {"test", modes_json(r.test)},
               {"checkpoint", ctx.model_path().string()},
               {"wall_clock_seconds", r.wall_clock_seconds}};
  if (cfg.seeds > 1) summary["seeds"] = seeds;
  emit(ctx, summary, mode_table(r.test.empty() ? r.dev : r.test, r.test.empty() ? "dev split" : "test split"));
  return kExitOk;
}

inline int cmd_eval(Context& ctx) {
  auto m = model::load_checkpoint(ctx.model_path());
  const auto split = ctx.flags().split.value_or("test");
  auto samples = ctx.load_split(split, true);
  std::vector<model::PredictMode> modes;
  if (ctx.flags().mode) {
    modes.push_back(model::predict_mode_from_string(*ctx.flags().mode));
  } else {
    for (auto md : {model::PredictMode::KNOWLEDGE, model::PredictMode::PROMPT, model::PredictMode::TEXT_ONLY})
      if (m.supports(md)) modes.push_back(md);
  }
  trainer::ModeReports reports;
  for (auto md : modes) {
    const bool needs_store = md == model::PredictMode::KNOWLEDGE && m.config().use_knowledge;
    reports[md] = trainer::evaluate(m, samples, md, needs_store ? &ctx.store() : nullptr);
  }
  json modes_full = json::object();
  for (const auto& [md, r] : reports) modes_full[model::to_string(md)] = f1_json(r);
  const auto path = ctx.work_file("eval", "eval-" + split + ".json");
  ctx.write_json(path, {{"split", split}, {"samples", samples.size()}, {"modes", modes_full}});
  json summary{{"verb", "eval"},
               {"split", split},
               {"samples", samples.size()},
               {"f1", modes_json(reports)},
               {"knowledge_reads", ctx.store_loaded() ? ctx.store().reads() : 0},
               {"provider_calls", ctx.provider_calls()},
               {"report", path.string()}};
  emit(ctx, summary, mode_table(reports, split + " split"));
  return kExitOk;
}

/// NER input: one whitespace-tokenized sentence per line. RE input: the
/// JSON-lines relation format.
inline int cmd_predict(Context& ctx) {
  if (!ctx.flags().input) throw UsageError("predict needs --input <file>");
  auto m = model::load_checkpoint(ctx.model_path());
  const auto mode = model::predict_mode_from_string(ctx.flags().mode.value_or(model::to_string(m.deployment_mode())));
  std::vector<Sample> samples;
  if (m.task() == Task::NER) {
    std::ifstream in(*ctx.flags().input);
    if (!in) throw Error("cannot open input '" + *ctx.flags().input + "'");
    std::string line;
    while (std::getline(in, line)) {
      auto tokens = text::split_whitespace(line);
      if (tokens.empty()) continue;
      Sample s;
      s.id = "input-" + std::to_string(samples.size());
      s.task = Task::NER;
      s.tokens = std::move(tokens);
      s.ner_tags.assign(s.tokens.size(), "O");
      samples.push_back(std::move(s));
    }
  } else {
    samples = corpus::load_mre(*ctx.flags().input);
  }
  std::optional<knowledge::KnowledgeStore> fresh;
  if (mode == model::PredictMode::KNOWLEDGE && m.config().use_knowledge) {
    fresh.emplace();
    auto src = ctx.knowledge_source();
    src.store = &*fresh;
    trainer::ensure_knowledge(samples, src);
  }
  std::ostringstream t;
  json preds = json::array();
  for (const auto& s : samples) {
    auto p = m.predict(s, mode, fresh ? fresh->find(s.id) : nullptr);
    if (m.task() == Task::NER) {
      for (std::size_t i = 0; i < s.tokens.size(); ++i) t << (i ? " " : "") << s.tokens[i] << '/' << p.tags[i];
      t << '\n';
      preds.push_back(p.tags);
    } else {
      t << p.relation << '\n';
      preds.push_back(p.relation);
    }
  }
  json summary{{"verb", "predict"},
               {"mode", model::to_string(mode)},
               {"sentences", samples.size()},
               {"provider_calls", ctx.provider_calls()},
               {"predictions", preds}};
  emit(ctx, summary, t.str());
  return kExitOk;
}

inline int cmd_cross_domain(Context& ctx) {
  auto source = ctx.load_splits();
  auto target = ctx.load_split("target", true);
  trainer::CrossDomainOptions opt;
  const auto a = ctx.config().value("augment", json::object());
  auto ac = ctx.augment_config();
  opt.in_domain_kinds = ac.kinds;
  opt.times = ac.times;
  opt.augment_seed = ac.seed;
  opt.zero_shot_count = a.value("zero_shot_count", opt.zero_shot_count);
  auto src = ctx.knowledge_source();
  auto report = trainer::cross_domain_eval(source, target, ctx.train_config(), src, opt);
  src.store->save(ctx.knowledge_path());
  const auto path = ctx.work_file("cross_domain", "cross_domain.json");
  ctx.write_json(path, report.to_json(false));
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"setting", r.setting}, {"train_samples", r.train_samples}, {"precision", r.result.precision},
                    {"recall", r.result.recall}, {"f1", r.result.f1}});
  emit(ctx,
       {{"verb", "cross-domain"},
        {"mode", model::to_string(report.mode)},
        {"kept_types", report.kept_types},
        {"dropped_types", report.dropped_types},
        {"rows", rows},
        {"report", path.string()}},
       report.table());
  return kExitOk;
}

inline int cmd_aug_curve(Context& ctx) {
  auto data = ctx.load_splits();
  const auto curve = ctx.config().value("curve", json::object());
  auto sizes = curve.value("sizes", std::vector<std::size_t>{50, 100, 200, 400});
  auto times = curve.value("times", std::vector<std::size_t>{0, 1, 2});
  auto src = ctx.knowledge_source();
  auto report = trainer::augmentation_curve(data, sizes, times, ctx.train_config(), ctx.augment_config(), src);
  src.store->save(ctx.knowledge_path());
  const auto csv = ctx.work_file("curve_csv", "curve.csv");
  ctx.write_text(csv, report.csv());
  ctx.write_json(ctx.work_file("curve_json", "curve.json"), report.to_json());
  json pts = json::array();
  for (const auto& p : report.points)
    pts.push_back({{"size", p.size}, {"times", p.times}, {"seed", p.seed}, {"augmented", p.augmented}, {"f1", p.result.f1}});
  emit(ctx, {{"verb", "aug-curve"}, {"mode", model::to_string(report.mode)}, {"points", pts}, {"csv", csv.string()}},
       report.csv());
  return kExitOk;
}

// ---------------------------------------------------------------------------

inline void build_app(CLI::App& app, Flags& f) {
  app.description("Chain-of-thought knowledge synthesis, augmentation and prompt distillation for multimodal IE.");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("-c,--config", f.config, "JSON config file (paths inside resolve against its directory)");
  app.add_option("--set", f.sets, "Override a config key, e.g. --set train.epochs=3 (repeatable)");
  app.add_option("--llm", f.llm, "LLM provider: mock:<script.json> or http:<endpoint-name>");
  app.add_option("--caption", f.caption, "Captioner: file:<path>, http:<endpoint-name> or none");
  app.add_option("--task", f.task, "Task: ner or re")->check(CLI::IsMember({"ner", "re"}));
  app.add_option("--mode", f.mode, "Prediction mode: knowledge, prompt or text_only")
      ->check(CLI::IsMember({"knowledge", "prompt", "text_only"}));
  app.add_option("--seed", f.seed, "Random seed for training and subsampling");
  app.add_option("--alpha", f.alpha, "Weight of the distillation term")->check(CLI::NonNegativeNumber);
  app.add_option("--variant", f.variant, "cpd, upd, prefixd, mv or none; a comma list compares variants");
  app.add_option("--times", f.times, "Augmentation times: a count for augment, a comma list for aug-curve");
  app.add_option("--sizes", f.sizes, "Comma list of training subsample sizes for aug-curve");
  app.add_option("--split", f.split, "Split to evaluate: train, dev, test or target (default test)");
  app.add_option("--input", f.input, "Input file for predict");
  app.add_option("--model", f.model_path, "Checkpoint path (default <work_dir>/model.json)");
  app.add_option("--out", f.out_dir, "Output directory (overrides work_dir)");

  const std::vector<std::pair<std::string, std::string>> verbs{
      {"synthesize", "Query the LLM for per-sample knowledge and store it"},
      {"augment", "Create style, entity and image augmentations of the training split"},
      {"train", "Train the student (a --variant list trains and compares several)"},
      {"eval", "Evaluate a checkpoint in one or all prediction modes"},
      {"predict", "Tag sentences from --input with a checkpoint"},
      {"cross-domain", "Train on one domain, test on data.target, with and without augmentation"},
      {"aug-curve", "F1 over training sizes and augmentation times; writes curve.csv"}};
  for (const auto& [name, help] : verbs) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&f, name = name] { f.verb = name; });
  }
}

inline std::string help_text() {
  CLI::App app{"", "cotpd"};
  Flags f;
  build_app(app, f);
  return app.help();
}

/// Entry point: 0 on success, 1 on usage errors (with help), 2 when a stage
/// fails at run time.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"", "cotpd"};
  Flags f;
  build_app(app, f);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  auto old_sink = log::set_sink([&err](const std::string& msg) { err << "warning: " << msg << '\n'; });
  struct Restore {
    decltype(old_sink) sink;
    ~Restore() { log::set_sink(sink); }
  } restore{old_sink};

  std::optional<Context> ctx;
  try {
    ctx.emplace(f, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    if (f.verb == "synthesize") return cmd_synthesize(*ctx);
    if (f.verb == "augment") return cmd_augment(*ctx);
    if (f.verb == "train") return cmd_train(*ctx);
    if (f.verb == "eval") return cmd_eval(*ctx);
    if (f.verb == "predict") return cmd_predict(*ctx);
    if (f.verb == "cross-domain") return cmd_cross_domain(*ctx);
    if (f.verb == "aug-curve") return cmd_aug_curve(*ctx);
    err << "error: unknown verb\n\n" << app.help();
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace cotpd::cli
