#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/augment/augment.hpp"
#include "cotpd/augment/corpus_augment.hpp"
#include "cotpd/corpus/bio.hpp"
#include "cotpd/knowledge/caption.hpp"
#include "cotpd/knowledge/knowledge.hpp"
#include "cotpd/knowledge/llm.hpp"
#include "cotpd/log.hpp"
#include "cotpd/trainer/train.hpp"

namespace cotpd::trainer {

using augment::AugmentConfig;
using augment::AugmentKind;
using augment::EntityPool;
using knowledge::CaptionService;
using knowledge::LlmGateway;

/// Where knowledge for new (augmented) samples comes from.
struct KnowledgeSource {
  LlmGateway* gateway = nullptr;
  CaptionService* captions = nullptr;
  KnowledgeStore* store = nullptr;
  knowledge::SynthesisOptions options;
};

/// Synthesizes records for samples the store does not hold yet.
inline knowledge::SynthesisStats ensure_knowledge(const std::vector<Sample>& samples, KnowledgeSource& src) {
  if (!src.store) throw ConfigError("no knowledge store configured");
  auto missing = missing_knowledge(samples, src.store);
  if (missing.empty()) return {};
  if (!src.gateway) throw MissingKnowledgeError(std::move(missing));
  std::set<std::string> wanted(missing.begin(), missing.end());
  std::vector<Sample> todo;
  for (const auto& s : samples)
    if (wanted.contains(s.id)) todo.push_back(s);
  return knowledge::synthesize_corpus(todo, *src.gateway, src.captions, *src.store, src.options);
}

// ---------------------------------------------------------------------------
// Learning-rate grid

struct GridResult {
  std::vector<RunReport> runs;
  std::size_t best = 0;
  std::optional<TrainResult> best_run;
};

inline double selection_score(const RunReport& r) {
  if (auto it = r.dev.find(r.selection_mode); it != r.dev.end()) return it->second.f1;
  double best = 0.0;
  for (const auto& e : r.epochs) best = std::max(best, e.dev_f1.value_or(0.0));
  return best;
}

/// One sequential full run per grid rate (or the single configured rate);
/// the run with the best dev score in the selection mode wins. Ties go to
/// the earlier rate.
inline GridResult grid_search(const TrainConfig& config, const Splits& data, const KnowledgeStore* store,
                              std::optional<LabelSet> labels = std::nullopt) {
  config.validate();
  std::vector<double> rates = config.lr_grid.empty() ? std::vector<double>{config.learning_rate} : config.lr_grid;
  GridResult out;
  double best_score = -1.0;
  for (double lr : rates) {
    TrainConfig c = config;
    c.learning_rate = lr;
    auto result = train(c, data, store, labels);
    const double score = selection_score(result.report);
    out.runs.push_back(result.report);
    if (score > best_score) {
      best_score = score;
      out.best = out.runs.size() - 1;
      out.best_run.emplace(std::move(result));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variant comparison

struct VariantRow {
  model::Variant variant = model::Variant::CPD;
  PredictMode deployment = PredictMode::PROMPT;
  RunReport report;

  double deployed_f1(const ModeReports& m) const {
    auto it = m.find(deployment);
    return it == m.end() ? 0.0 : it->second.f1;
  }
};

struct VariantReport {
  std::vector<VariantRow> rows;
  std::vector<std::string> warnings;

  const VariantRow* find(model::Variant v) const {
    for (const auto& r : rows)
      if (r.variant == v) return &r;
    return nullptr;
  }

  nlohmann::json to_json(bool with_wall_clock = true) const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) {
      auto modes = [](const ModeReports& m) {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [mode, f] : m) j[model::to_string(mode)] = cotpd::to_json(f);
        return j;
      };
      rows_j.push_back({{"variant", model::to_string(r.variant)},
                        {"deployment_mode", model::to_string(r.deployment)},
                        {"dev", modes(r.report.dev)},
                        {"test", modes(r.report.test)},
                        {"best_epoch", r.report.best_epoch},
                        {"run", r.report.to_json(with_wall_clock)}});
    }
    return {{"rows", rows_j}, {"warnings", warnings}};
  }

  /// Fixed-width table: one row per variant, F1 per mode on the test split.
  std::string table() const {
    std::ostringstream os;
    auto cell = [](const ModeReports& m, PredictMode mode) {
      auto it = m.find(mode);
      if (it == m.end()) return std::string("     -");
      char buf[16];
      std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * it->second.f1);
      return std::string(buf);
    };
    os << "variant   deploy     knowledge  prompt  text_only\n";
    for (const auto& r : rows) {
      char head[32];
      std::snprintf(head, sizeof head, "%-9s %-10s", model::to_string(r.variant), model::to_string(r.deployment));
      os << head << " " << cell(r.report.test, PredictMode::KNOWLEDGE) << "    " << cell(r.report.test, PredictMode::PROMPT)
         << "  " << cell(r.report.test, PredictMode::TEXT_ONLY) << "\n";
    }
    return os.str();
  }
};

/// Trains each variant with otherwise identical settings. A CPD result below
/// MV (both deployed on text alone) is reported as a warning, not an error.
inline VariantReport compare_variants(const TrainConfig& config, const std::vector<model::Variant>& variants,
                                      const Splits& data, const KnowledgeStore* store) {
  VariantReport out;
  for (auto v : variants) {
    TrainConfig c = config;
    c.model.variant = v;
    auto grid = grid_search(c, data, store);
    VariantRow row;
    row.variant = v;
    row.deployment = grid.best_run->model.deployment_mode();
    row.report = grid.runs[grid.best];
    out.rows.push_back(std::move(row));
  }
  const auto* cpd = out.find(model::Variant::CPD);
  const auto* mv = out.find(model::Variant::MV);
  if (cpd && mv && !data.test.empty()) {
    const double a = cpd->deployed_f1(cpd->report.test), b = mv->deployed_f1(mv->report.test);
    if (a < b) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "expected cpd >= mv on test F1, got %.4f < %.4f", a, b);
      out.warnings.emplace_back(buf);
      log::warn(buf);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cross-domain transfer

/// Entity types (NER) or positive relations (RE) present in a dataset.
inline std::set<std::string> label_types(const std::vector<Sample>& samples, const std::string& none_label = "None") {
  std::set<std::string> out;
  for (const auto& s : samples) {
    if (s.task == Task::NER) {
      for (const auto& sp : bio::decode(s.ner_tags)) out.insert(sp.type);
    } else if (s.relation && *s.relation != none_label) {
      out.insert(*s.relation);
    }
  }
  return out;
}

/// NER: entities of other types become O. RE: samples with other relations
/// are dropped.
inline std::vector<Sample> restrict_labels(const std::vector<Sample>& samples, const std::set<std::string>& keep,
                                           const std::string& none_label = "None") {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.task == Task::NER) {
      Sample r = s;
      std::vector<Span> spans;
      for (const auto& sp : bio::decode(s.ner_tags))
        if (keep.contains(sp.type)) spans.push_back(sp);
      r.ner_tags = bio::encode(spans, s.tokens.size());
      out.push_back(std::move(r));
    } else if (!s.relation || *s.relation == none_label || keep.contains(*s.relation)) {
      out.push_back(s);
    }
  }
  return out;
}

struct CrossDomainOptions {
  std::vector<AugmentKind> in_domain_kinds{AugmentKind::ENTITY};
  std::size_t times = 1;
  std::uint64_t augment_seed = 13;
  std::size_t zero_shot_count = 400;
  std::optional<EntityPool> zero_shot_pool;  // built from the LLM when absent
};

struct CrossDomainRow {
  std::string setting;
  std::size_t train_samples = 0;
  F1Report result;
  RunReport report;
};

struct CrossDomainReport {
  std::vector<std::string> kept_types;
  std::vector<std::string> dropped_types;
  PredictMode mode = PredictMode::PROMPT;
  std::vector<CrossDomainRow> rows;

  nlohmann::json to_json(bool with_wall_clock = true) const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
      rows_j.push_back({{"setting", r.setting},
                        {"train_samples", r.train_samples},
                        {"result", cotpd::to_json(r.result)},
                        {"run", r.report.to_json(with_wall_clock)}});
    return {{"kept_types", kept_types},
            {"dropped_types", dropped_types},
            {"mode", model::to_string(mode)},
            {"rows", rows_j}};
  }

  std::string table() const {
    std::ostringstream os;
    os << "setting              train      P       R      F1\n";
    for (const auto& r : rows) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%-20s %5zu  %6.2f  %6.2f  %6.2f\n", r.setting.c_str(), r.train_samples,
                    100 * r.result.precision, 100 * r.result.recall, 100 * r.result.f1);
      os << buf;
    }
    return os.str();
  }
};

/// Trains on domain A and tests on domain B in three settings: no
/// augmentation, augmentation from A's own entities, and entity replacement
/// from a zero-shot pool disjoint from A. Labels are restricted to the types
/// both domains share.
inline CrossDomainReport cross_domain_eval(const Splits& source, const std::vector<Sample>& target,
                                           const TrainConfig& config, KnowledgeSource& src,
                                           const CrossDomainOptions& options = {}) {
  if (source.train.empty() || target.empty()) throw ValidationError("cross-domain evaluation needs both domains");
  const auto types_a = label_types(source.train), types_b = label_types(target);
  CrossDomainReport out;
  std::set<std::string> keep;
  for (const auto& t : types_a) {
    if (types_b.contains(t)) {
      keep.insert(t);
      out.kept_types.push_back(t);
    } else {
      out.dropped_types.push_back(t);
    }
  }
  for (const auto& t : types_b)
    if (!types_a.contains(t)) out.dropped_types.push_back(t);
  if (keep.empty()) throw LabelError("source and target domains share no labels");
  for (const auto& t : out.dropped_types) log::warn("cross-domain: dropping label " + t + " (not in both domains)");

  Splits base{restrict_labels(source.train, keep), restrict_labels(source.dev, keep), {}};
  const auto test = restrict_labels(target, keep);
  const Task task = base.train.front().task;

  // Validate the zero-shot pool before any training happens.
  std::optional<EntityPool> zero_pool = options.zero_shot_pool;
  if (zero_pool) {
    if (zero_pool->origin != EntityPool::Origin::ZERO_SHOT)
      throw ConfigError("zero-shot setting needs a pool of zero-shot origin");
    augment::check_disjoint(*zero_pool, base.train);
  } else if (task == Task::NER) {
    if (!src.gateway) throw ConfigError("zero-shot pool needs an LLM");
    zero_pool = augment::build_zero_shot_pool(*src.gateway, options.zero_shot_count,
                                              std::vector<std::string>(keep.begin(), keep.end()), base.train);
    augment::check_disjoint(*zero_pool, base.train);
  }

  auto run = [&](const std::string& setting, const std::vector<Sample>& extra) {
    Splits s = base;
    s.train.insert(s.train.end(), extra.begin(), extra.end());
    if (config.model.use_knowledge) ensure_knowledge(s.train, src);
    auto grid = grid_search(config, s, src.store);
    auto& m = grid.best_run->model;
    out.mode = m.deployment_mode();
    if (out.mode == PredictMode::KNOWLEDGE && config.model.use_knowledge) ensure_knowledge(test, src);
    CrossDomainRow row;
    row.setting = setting;
    row.train_samples = s.train.size();
    row.result = evaluate(m, test, out.mode, src.store);
    row.report = grid.runs[grid.best];
    out.rows.push_back(std::move(row));
  };
  auto augmented = [&](const std::vector<AugmentKind>& kinds, const EntityPool* pool) {
    if (!src.gateway) throw ConfigError("augmentation needs an LLM");
    AugmentConfig ac;
    ac.kinds = kinds;
    ac.times = options.times;
    ac.seed = options.augment_seed;
    std::vector<Sample> extra;
    for (auto& a : augment::augment_corpus(base.train, *src.gateway, pool, ac).samples)
      extra.push_back(std::move(a.sample));
    return extra;
  };

  run("w/o aug", {});
  auto in_pool = augment::build_in_domain_pool(base.train);
  run("w/ in-domain aug", augmented(options.in_domain_kinds, &in_pool));
  if (zero_pool) run("w/ zero-shot aug", augmented({AugmentKind::ENTITY}, &*zero_pool));
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation-times curve

struct CurvePoint {
  std::size_t size = 0;
  std::size_t times = 0;
  std::uint64_t seed = 0;
  std::size_t augmented = 0;  // accepted augmented samples added
  F1Report result;
};

struct CurveReport {
  std::vector<CurvePoint> points;
  PredictMode mode = PredictMode::PROMPT;

  std::string csv() const {
    std::ostringstream os;
    os << "size,times,precision,recall,f1,seed\n";
    for (const auto& p : points)
      os << p.size << ',' << p.times << ',' << nlohmann::json(p.result.precision).dump() << ','
         << nlohmann::json(p.result.recall).dump() << ',' << nlohmann::json(p.result.f1).dump() << ',' << p.seed
         << '\n';
    return os.str();
  }

  nlohmann::json to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points)
      pts.push_back({{"size", p.size},
                     {"times", p.times},
                     {"seed", p.seed},
                     {"augmented", p.augmented},
                     {"result", cotpd::to_json(p.result)}});
    return {{"mode", model::to_string(mode)}, {"points", pts}};
  }
};

/// Seeded, nested subsample of the training split: the first `size` entries
/// of one fixed shuffle.
inline std::vector<Sample> subsample(const std::vector<Sample>& train, std::size_t size, std::uint64_t seed) {
  if (size > train.size())
    throw ValidationError("subsample size " + std::to_string(size) + " exceeds the " + std::to_string(train.size()) +
                          " training samples");
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < size; ++i) out.push_back(train[idx[i]]);
  return out;
}

/// For every (size, times) pair: subsample, augment `times` times per kind
/// (times = 0 trains on the subsample alone), train and score the test split
/// (dev when there is no test split).
inline CurveReport augmentation_curve(const Splits& data, const std::vector<std::size_t>& sizes,
                                      const std::vector<std::size_t>& times, const TrainConfig& config,
                                      const AugmentConfig& augment_config, KnowledgeSource& src) {
  for (auto s : sizes)
    if (s > data.train.size())
      throw ValidationError("curve size " + std::to_string(s) + " exceeds the " + std::to_string(data.train.size()) +
                            " training samples");
  const auto& eval_set = data.test.empty() ? data.dev : data.test;
  CurveReport out;
  for (std::size_t k = 0; k < config.seeds; ++k) {
    const std::uint64_t seed = config.seed + k;
    for (auto size : sizes) {
      auto base = subsample(data.train, size, seed);
      for (auto t : times) {
        std::vector<Sample> train_set = base;
        std::size_t added = 0;
        if (t > 0) {
          if (!src.gateway) throw ConfigError("augmentation needs an LLM");
          AugmentConfig ac = augment_config;
          ac.times = t;
          auto pool = augment::build_in_domain_pool(base);
          for (auto& a : augment::augment_corpus(base, *src.gateway, &pool, ac).samples) {
            train_set.push_back(std::move(a.sample));
            ++added;
          }
        }
        TrainConfig c = config;
        c.seed = seed;
        Splits s{train_set, data.dev, {}};
        if (c.model.use_knowledge) ensure_knowledge(s.train, src);
        auto grid = grid_search(c, s, src.store);
        auto& m = grid.best_run->model;
        out.mode = m.deployment_mode();
        if (out.mode == PredictMode::KNOWLEDGE && c.model.use_knowledge) ensure_knowledge(eval_set, src);
        out.points.push_back({size, t, seed, added, evaluate(m, eval_set, out.mode, src.store)});
      }
    }
  }
  return out;
}

}  // namespace cotpd::trainer
