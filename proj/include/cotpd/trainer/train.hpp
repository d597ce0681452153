#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/metrics.hpp"
#include "cotpd/corpus/validate.hpp"
#include "cotpd/error.hpp"
#include "cotpd/knowledge/knowledge.hpp"
#include "cotpd/model/optimizer.hpp"
#include "cotpd/model/student.hpp"
#include "cotpd/text.hpp"
#include "cotpd/trainer/config.hpp"
#include "cotpd/trainer/report.hpp"

namespace cotpd::trainer {

using knowledge::CoTKnowledge;
using knowledge::KnowledgeStore;
using model::LabelSet;
using model::StudentModel;
using model::Vocabulary;

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> dev;
  std::vector<Sample> test;
};

/// Words of the samples, their captions and their knowledge records.
inline Vocabulary build_vocabulary(const std::vector<Sample>& samples, const KnowledgeStore* store) {
  std::set<std::string> words;
  auto add_text = [&](const std::string& s) {
    for (auto& w : text::split_whitespace(s)) words.insert(text::lower(w));
  };
  for (const auto& s : samples) {
    for (const auto& t : s.tokens) words.insert(text::lower(t));
    if (s.caption) add_text(*s.caption);
    if (const CoTKnowledge* k = store ? store->find(s.id) : nullptr) {
      for (const auto* f : {&k->noun, &k->sentence, &k->multimodality, &k->caption}) add_text(*f);
    }
  }
  return Vocabulary::build(words);
}

inline std::vector<std::string> missing_knowledge(const std::vector<Sample>& samples, const KnowledgeStore* store) {
  std::vector<std::string> ids;
  for (const auto& s : samples)
    if (!store || !store->find(s.id)) ids.push_back(s.id);
  return ids;
}

inline void check_task(const StudentModel& m, const std::vector<Sample>& samples) {
  for (const auto& s : samples)
    if (s.task != m.task())
      throw ValidationError("sample '" + s.id + "' is a " + to_string(s.task) + " sample but the model was trained for " +
                            to_string(m.task()));
}

/// Predicts every sample in `mode` and scores against gold. Only KNOWLEDGE
/// mode reads the store; PROMPT and TEXT_ONLY use the text alone.
inline F1Report evaluate(const StudentModel& m, const std::vector<Sample>& samples, PredictMode mode,
                         const KnowledgeStore* store = nullptr) {
  check_task(m, samples);
  if (!m.supports(mode))
    throw ConfigError(std::string("variant ") + model::to_string(m.config().variant) + " has no " +
                      model::to_string(mode) + " mode");
  const bool needs_store = mode == PredictMode::KNOWLEDGE && m.config().use_knowledge;
  if (needs_store) {
    auto missing = missing_knowledge(samples, store);
    if (!missing.empty()) throw MissingKnowledgeError(std::move(missing));
  }
  if (m.task() == Task::NER) {
    std::vector<std::vector<Span>> pred, gold;
    for (const auto& s : samples) {
      const CoTKnowledge* k = needs_store ? store->find(s.id) : nullptr;
      pred.push_back(bio::decode(m.predict(s, mode, k).tags));
      gold.push_back(bio::decode(s.ner_tags));
    }
    return span_f1(pred, gold);
  }
  std::vector<std::string> pred, gold;
  for (const auto& s : samples) {
    const CoTKnowledge* k = needs_store ? store->find(s.id) : nullptr;
    pred.push_back(m.predict(s, mode, k).relation);
    gold.push_back(*s.relation);
  }
  return relation_f1(pred, gold);
}

/// Scores in every mode the model supports. KNOWLEDGE is skipped when the
/// model needs records the store does not hold.
inline ModeReports evaluate_modes(const StudentModel& m, const std::vector<Sample>& samples,
                                  const KnowledgeStore* store) {
  ModeReports out;
  if (samples.empty()) return out;
  for (auto mode : {PredictMode::KNOWLEDGE, PredictMode::PROMPT, PredictMode::TEXT_ONLY}) {
    if (!m.supports(mode)) continue;
    if (mode == PredictMode::KNOWLEDGE && m.config().use_knowledge && !missing_knowledge(samples, store).empty())
      continue;
    out[mode] = evaluate(m, samples, mode, store);
  }
  return out;
}

struct TrainResult {
  StudentModel model;
  RunReport report;
};

/// Mini-batch AdamW on nll + alpha * distillation over the knowledge-enhanced
/// training view. Dev F1 in the selection mode is computed after every epoch
/// and the best epoch's parameters are kept.
inline TrainResult train(const TrainConfig& config, const Splits& data, const KnowledgeStore* store,
                         std::optional<LabelSet> labels = std::nullopt) {
  config.validate();
  if (data.train.empty()) throw ValidationError("training split is empty");
  const Task task = data.train.front().task;
  for (const auto& s : data.train) {
    if (s.task != task) throw ValidationError("training split mixes NER and RE samples");
    validate(s);
  }
  if (config.model.use_knowledge) {
    auto missing = missing_knowledge(data.train, store);
    if (!missing.empty()) throw MissingKnowledgeError(std::move(missing));
  }
  const KnowledgeStore* train_store = config.model.use_knowledge ? store : nullptr;
  const auto started = std::chrono::steady_clock::now();

  model::StudentConfig mc = config.model;
  mc.seed = config.seed;
  StudentModel m(mc, task, build_vocabulary(data.train, train_store),
                 labels ? std::move(*labels) : LabelSet::from_samples(data.train, task));

  RunReport report;
  report.config = config;
  report.seed = config.seed;
  report.learning_rate = config.learning_rate;
  report.train_samples = data.train.size();
  report.selection_mode = config.selection_mode.value_or(m.deployment_mode());
  if (!m.supports(report.selection_mode))
    throw ConfigError(std::string("selection mode ") + model::to_string(report.selection_mode) +
                      " is not available for variant " + model::to_string(mc.variant));

  model::AdamWOptions opt;
  opt.learning_rate = config.learning_rate;
  opt.weight_decay = config.weight_decay;
  opt.clip_norm = config.clip_norm;
  model::AdamW optimizer(m.parameters(), opt);

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::optional<std::vector<ad::Matrix>> best;
  double best_f1 = -1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    model::LossBundle epoch_sum;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      optimizer.zero_grad();
      double nll = 0.0, cpd = 0.0;
      for (std::size_t i = b; i < end; ++i) {
        const auto& s = data.train[order[i]];
        auto graph = m.training_loss(s, train_store ? train_store->find(s.id) : nullptr);
        ad::backward(graph.total);
        nll += graph.losses.nll;
        cpd += graph.losses.cpd;
      }
      const double n = static_cast<double>(end - b);
      optimizer.step(1.0 / n);
      auto losses = model::total_loss(nll / n, cpd / n, mc.alpha);
      report.steps.push_back({epoch, ++step, losses});
      epoch_sum.nll += losses.nll;
      epoch_sum.cpd += losses.cpd;
      ++epoch_steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = model::total_loss(epoch_sum.nll / epoch_steps, epoch_sum.cpd / epoch_steps, mc.alpha);
    if (!data.dev.empty()) {
      double f1 = evaluate(m, data.dev, report.selection_mode, store).f1;
      rec.dev_f1 = f1;
      if (f1 > best_f1) {
        best_f1 = f1;
        report.best_epoch = epoch;
        if (config.keep_best) best = m.snapshot();
      }
    } else {
      report.best_epoch = epoch;
    }
    report.epochs.push_back(rec);
  }
  if (best) m.restore(*best);

  report.dev = evaluate_modes(m, data.dev, store);
  report.test = evaluate_modes(m, data.test, store);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(m), std::move(report)};
}

}  // namespace cotpd::trainer
