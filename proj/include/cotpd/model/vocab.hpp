#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"
#include "cotpd/text.hpp"

namespace cotpd::model {

/// Word-level vocabulary over lowercased tokens. Ids 0 and 1 are reserved
/// for the unknown-word and separator tokens.
class Vocabulary {
 public:
  static constexpr const char* kUnk = "[UNK]";
  static constexpr const char* kSep = "[SEP]";
  static constexpr std::size_t kUnkId = 0;
  static constexpr std::size_t kSepId = 1;

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  explicit Vocabulary(const std::vector<std::string>& words) {
    add(kUnk);
    add(kSep);
    for (const auto& w : words) add(text::lower(w));
  }

  /// Words sorted for a deterministic id assignment.
  static Vocabulary build(const std::set<std::string>& words) {
    return Vocabulary(std::vector<std::string>(words.begin(), words.end()));
  }

  std::size_t id(const std::string& token) const {
    if (token == kSep) return kSepId;
    auto it = ids_.find(text::lower(token));
    return it == ids_.end() ? kUnkId : it->second;
  }

  std::vector<std::size_t> ids(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(id(t));
    return out;
  }

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  void add(const std::string& w) {
    if (ids_.emplace(w, words_.size()).second) words_.push_back(w);
  }
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> ids_;
};

/// Output label inventory: BIO tags for NER, relation names for RE.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (!index_.emplace(labels_[i], i).second) throw LabelError("duplicate label '" + labels_[i] + "'");
  }

  /// "O" followed by B-/I- tags for each entity type, types sorted.
  static LabelSet bio_for_types(const std::set<std::string>& types) {
    std::vector<std::string> labels{"O"};
    for (const auto& t : types) {
      labels.push_back("B-" + t);
      labels.push_back("I-" + t);
    }
    return LabelSet(std::move(labels));
  }

  static LabelSet from_samples(const std::vector<Sample>& samples, Task task, const std::string& none_label = "None") {
    if (task == Task::NER) {
      std::set<std::string> types;
      for (const auto& s : samples)
        for (const auto& t : bio::entity_types(s.ner_tags)) types.insert(t);
      return bio_for_types(types);
    }
    std::set<std::string> rels{none_label};
    for (const auto& s : samples)
      if (s.relation) rels.insert(*s.relation);
    std::vector<std::string> labels{none_label};
    for (const auto& r : rels)
      if (r != none_label) labels.push_back(r);
    return LabelSet(std::move(labels));
  }

  std::size_t index(const std::string& label) const {
    auto it = index_.find(label);
    if (it == index_.end()) throw LabelError("label '" + label + "' outside the label vocabulary");
    return it->second;
  }
  bool contains(const std::string& label) const { return index_.contains(label); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cotpd::model
