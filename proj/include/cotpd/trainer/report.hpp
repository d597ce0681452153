#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/metrics.hpp"
#include "cotpd/model/config.hpp"
#include "cotpd/model/losses.hpp"
#include "cotpd/trainer/config.hpp"

namespace cotpd {

inline nlohmann::json to_json(const F1Report& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"tp", r.tp},               {"fp", r.fp},         {"fn", r.fn}};
}

}  // namespace cotpd

namespace cotpd::trainer {

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  model::LossBundle losses;
};

struct EpochRecord {
  std::size_t epoch = 0;
  model::LossBundle losses;  // means over the epoch's steps
  std::optional<double> dev_f1;
};

using ModeReports = std::map<PredictMode, F1Report>;

struct RunReport {
  TrainConfig config;
  std::uint64_t seed = 0;
  double learning_rate = 0.0;
  std::size_t train_samples = 0;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::size_t best_epoch = 0;
  PredictMode selection_mode = PredictMode::PROMPT;
  ModeReports dev;
  ModeReports test;
  double wall_clock_seconds = 0.0;

  /// Everything except wall-clock time is a pure function of the inputs, so
  /// two runs with the same seed serialize identically without it.
  nlohmann::json to_json(bool with_wall_clock = true) const {
    auto bundle = [](const model::LossBundle& b) {
      return nlohmann::json{{"nll", b.nll}, {"cpd", b.cpd}, {"total", b.total}};
    };
    auto modes = [](const ModeReports& m) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [mode, r] : m) j[model::to_string(mode)] = cotpd::to_json(r);
      return j;
    };
    nlohmann::json epochs_j = nlohmann::json::array(), steps_j = nlohmann::json::array();
    for (const auto& e : epochs) {
      auto j = bundle(e.losses);
      j["epoch"] = e.epoch;
      j["dev_f1"] = e.dev_f1 ? nlohmann::json(*e.dev_f1) : nlohmann::json();
      epochs_j.push_back(j);
    }
    for (const auto& s : steps) {
      auto j = bundle(s.losses);
      j["epoch"] = s.epoch;
      j["step"] = s.step;
      steps_j.push_back(j);
    }
    nlohmann::json j{{"config", trainer::to_json(config)},
                     {"seed", seed},
                     {"learning_rate", learning_rate},
                     {"train_samples", train_samples},
                     {"epochs", epochs_j},
                     {"steps", steps_j},
                     {"best_epoch", best_epoch},
                     {"selection_mode", model::to_string(selection_mode)},
                     {"dev", modes(dev)},
                     {"test", modes(test)}};
    if (with_wall_clock) j["wall_clock_seconds"] = wall_clock_seconds;
    return j;
  }
};

}  // namespace cotpd::trainer
