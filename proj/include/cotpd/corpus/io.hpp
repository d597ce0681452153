#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/corpus/validate.hpp"
#include "cotpd/error.hpp"
#include "cotpd/text.hpp"

namespace cotpd::corpus {

namespace fs = std::filesystem;

struct MnerLoadResult {
  std::vector<Sample> samples;
  std::size_t repaired_tags = 0;
};

namespace detail {

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::string sample_id(const fs::path& path, std::size_t index) {
  return path.stem().string() + "-" + std::to_string(index);
}

}  // namespace detail

/// Reads a CoNLL-style MNER file: optional `IMGID:<id>` header per block,
/// `token<TAB>tag` lines, blank line between samples. Illegal I-t tags are
/// repaired to B-t and counted.
inline MnerLoadResult load_mner(const fs::path& path) {
  auto in = detail::open_input(path);
  MnerLoadResult result;
  Sample current;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) {
      current.task = Task::NER;
      current.id = detail::sample_id(path, result.samples.size());
      result.repaired_tags += bio::repair(current.ner_tags);
      validate(current);
      result.samples.push_back(std::move(current));
    }
    current = Sample{};
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) {
      flush();
      continue;
    }
    if (line.rfind("IMGID:", 0) == 0) {
      if (!current.tokens.empty()) flush();
      current.image_ref = text::trim(line.substr(6));
      continue;
    }
    auto cols = text::split(line, '\t');
    if (cols.size() != 2 || cols[0].empty())
      throw ParseError(path.string(), line_no,
                       "expected `token<TAB>tag`, got " + std::to_string(cols.size()) + " column(s)");
    if (!bio::is_well_formed(cols[1]))
      throw ParseError(path.string(), line_no, "malformed BIO tag '" + cols[1] + "'");
    current.tokens.push_back(cols[0]);
    current.ner_tags.push_back(cols[1]);
  }
  flush();
  return result;
}

inline void write_mner(const std::vector<Sample>& samples, const fs::path& path) {
  auto out = detail::open_output(path);
  for (const auto& s : samples) {
    if (s.task != Task::NER) throw ValidationError("write_mner: sample '" + s.id + "' is not NER");
    if (s.image_ref) out << "IMGID:" << *s.image_ref << '\n';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << '\t' << s.ner_tags[i] << '\n';
    out << '\n';
  }
}

namespace detail {

inline Span read_entity(const nlohmann::json& obj, const std::string& key, const std::string& file,
                        std::size_t line_no) {
  if (!obj.is_object() || !obj.contains("pos"))
    throw ParseError(file, line_no, "field '" + key + "' must be an object with 'pos'");
  const auto& pos = obj["pos"];
  if (!pos.is_array() || pos.size() != 2 || !pos[0].is_number_integer() || !pos[1].is_number_integer())
    throw ParseError(file, line_no, "field '" + key + ".pos' must be [start, end]");
  auto start = pos[0].get<long long>();
  auto end = pos[1].get<long long>();
  if (start < 0 || end < 0) throw SpanRangeError(file + ":" + std::to_string(line_no) + ": negative span");
  return Span{static_cast<std::size_t>(start), static_cast<std::size_t>(end),
              obj.value("type", std::string("ENT"))};
}

inline const nlohmann::json& field(const nlohmann::json& obj, std::initializer_list<const char*> names,
                                   const std::string& file, std::size_t line_no) {
  for (const char* n : names)
    if (obj.contains(n)) return obj[n];
  throw ParseError(file, line_no, std::string("missing required field '") + *names.begin() + "'");
}

}  // namespace detail

/// Reads a JSON-lines MRE file. Field names follow the MNRE release; the
/// short aliases `token`/`h`/`t` are accepted as well.
inline std::vector<Sample> load_mre(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  const auto file = path.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(file, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(file, line_no, "expected a JSON object");
    Sample s;
    s.task = Task::RE;
    const auto& toks = detail::field(obj, {"tokens", "token"}, file, line_no);
    if (!toks.is_array()) throw ParseError(file, line_no, "'tokens' must be an array");
    for (const auto& t : toks) s.tokens.push_back(t.get<std::string>());
    const auto& rel = detail::field(obj, {"relation"}, file, line_no);
    if (!rel.is_string()) throw ParseError(file, line_no, "'relation' must be a string");
    s.relation = rel.get<std::string>();
    s.head_span = detail::read_entity(detail::field(obj, {"head", "h"}, file, line_no), "head", file, line_no);
    s.tail_span = detail::read_entity(detail::field(obj, {"tail", "t"}, file, line_no), "tail", file, line_no);
    if (obj.contains("img_id") && !obj["img_id"].is_null()) s.image_ref = obj["img_id"].get<std::string>();
    s.id = obj.contains("id") ? obj["id"].get<std::string>() : detail::sample_id(path, samples.size());
    try {
      validate(s);
    } catch (const SpanRangeError& e) {
      throw SpanRangeError(file + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(file, line_no, e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

inline nlohmann::json mre_to_json(const Sample& s) {
  auto entity = [](const Span& sp) {
    return nlohmann::json{{"pos", {sp.start, sp.end}}, {"type", sp.type}};
  };
  nlohmann::json obj{{"id", s.id},
                     {"tokens", s.tokens},
                     {"relation", s.relation.value_or("None")},
                     {"head", entity(s.head_span.value())},
                     {"tail", entity(s.tail_span.value())}};
  if (s.image_ref) obj["img_id"] = *s.image_ref;
  return obj;
}

inline void write_mre(const std::vector<Sample>& samples, const fs::path& path) {
  auto out = detail::open_output(path);
  for (const auto& s : samples) {
    if (s.task != Task::RE) throw ValidationError("write_mre: sample '" + s.id + "' is not RE");
    out << mre_to_json(s).dump() << '\n';
  }
}

inline std::vector<Sample> load_dataset(const fs::path& path, Task task) {
  return task == Task::NER ? load_mner(path).samples : load_mre(path);
}

inline void write_dataset(const std::vector<Sample>& samples, const fs::path& path, Task task) {
  task == Task::NER ? write_mner(samples, path) : write_mre(samples, path);
}

/// Plain-text label vocabulary, one label per line; blank lines and `#` comments skipped.
inline std::vector<std::string> load_labels(const fs::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    auto t = text::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (std::find(labels.begin(), labels.end(), t) == labels.end()) labels.push_back(t);
  }
  return labels;
}

inline void write_labels(const std::vector<std::string>& labels, const fs::path& path) {
  auto out = detail::open_output(path);
  for (const auto& l : labels) out << l << '\n';
}

}  // namespace cotpd::corpus
