#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "cotpd/error.hpp"
#include "cotpd/model/student.hpp"

namespace cotpd::model {

inline constexpr const char* kCheckpointFormat = "cotpd-checkpoint/1";

/// Self-describing JSON container: format id, task, config, label and word
/// vocabularies and every parameter tensor (row-major). Doubles are written
/// in shortest round-trip form, so a reload is bit-exact.
inline nlohmann::json checkpoint_json(const StudentModel& m) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : m.parameters()) {
    const auto& v = p.var.value();
    params[p.name] = {{"rows", v.rows()},
                      {"cols", v.cols()},
                      {"data", std::vector<double>(v.data(), v.data() + v.size())}};
  }
  return {{"format", kCheckpointFormat},
          {"task", to_string(m.task())},
          {"config", to_json(m.config())},
          {"labels", m.labels().labels()},
          {"vocab", m.vocab().words()},
          {"parameters", params}};
}

inline void save_checkpoint(const StudentModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_json(m).dump();
}

inline StudentModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kCheckpointFormat)
    throw ConfigError("unsupported checkpoint format '" + j.value("format", std::string("?")) + "'");
  auto words = j.at("vocab").get<std::vector<std::string>>();
  // Drop the reserved entries; the Vocabulary constructor re-adds them first.
  std::vector<std::string> plain(words.begin() + std::min<std::ptrdiff_t>(2, static_cast<std::ptrdiff_t>(words.size())),
                                 words.end());
  StudentModel m(student_config_from_json(j.at("config")), task_from_string(j.at("task").get<std::string>()),
                 Vocabulary(plain), LabelSet(j.at("labels").get<std::vector<std::string>>()));
  const auto& params = j.at("parameters");
  for (auto& p : m.parameters()) {
    if (!params.contains(p.name)) throw ConfigError("checkpoint lacks parameter " + p.name);
    const auto& t = params[p.name];
    auto data = t.at("data").get<std::vector<double>>();
    auto& v = p.var.mutable_value();
    if (t.at("rows").get<Eigen::Index>() != v.rows() || t.at("cols").get<Eigen::Index>() != v.cols() ||
        static_cast<Eigen::Index>(data.size()) != v.size())
      throw ShapeError("checkpoint tensor " + p.name + " has the wrong shape");
    std::copy(data.begin(), data.end(), v.data());
  }
  return m;
}

inline StudentModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'");
  try {
    return model_from_checkpoint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace cotpd::model
