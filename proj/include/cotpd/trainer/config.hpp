#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"
#include "cotpd/model/config.hpp"

namespace cotpd::trainer {

using model::PredictMode;
using model::StudentConfig;

/// Learning rates the grid may explore.
inline constexpr double kGridMinLr = 1e-6;
inline constexpr double kGridMaxLr = 5e-5;

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  std::vector<double> lr_grid;  // non-empty: grid mode, one full run per rate
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 7;
  std::size_t seeds = 1;  // > 1: repeat with seed, seed+1, ... and average
  std::optional<PredictMode> selection_mode;  // default: the model's deployment mode
  bool keep_best = true;
  StudentConfig model;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (seeds == 0) throw ConfigError("seeds must be >= 1");
    for (double lr : lr_grid)
      if (lr < kGridMinLr || lr > kGridMaxLr)
        throw ConfigError("grid learning rate " + nlohmann::json(lr).dump() + " lies outside [1e-6, 5e-5]");
    model.validate();
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j{{"epochs", c.epochs},
                   {"batch_size", c.batch_size},
                   {"learning_rate", c.learning_rate},
                   {"lr_grid", c.lr_grid},
                   {"weight_decay", c.weight_decay},
                   {"clip_norm", c.clip_norm},
                   {"seed", c.seed},
                   {"seeds", c.seeds},
                   {"keep_best", c.keep_best},
                   {"model", model::to_json(c.model)}};
  j["selection_mode"] = c.selection_mode ? nlohmann::json(model::to_string(*c.selection_mode)) : nlohmann::json();
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.is_null()) return c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_grid = j.value("lr_grid", c.lr_grid);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.seeds = j.value("seeds", c.seeds);
    c.keep_best = j.value("keep_best", c.keep_best);
    if (j.contains("selection_mode") && !j["selection_mode"].is_null())
      c.selection_mode = model::predict_mode_from_string(j["selection_mode"].get<std::string>());
    if (j.contains("model")) c.model = model::student_config_from_json(j["model"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  return c;
}

}  // namespace cotpd::trainer
