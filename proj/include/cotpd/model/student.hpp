#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cotpd/corpus/bio.hpp"
#include "cotpd/corpus/sample.hpp"
#include "cotpd/error.hpp"
#include "cotpd/knowledge/knowledge.hpp"
#include "cotpd/model/autodiff.hpp"
#include "cotpd/model/config.hpp"
#include "cotpd/model/encoder.hpp"
#include "cotpd/model/losses.hpp"
#include "cotpd/model/prompt.hpp"
#include "cotpd/model/vocab.hpp"
#include "cotpd/text.hpp"

namespace cotpd::model {

using knowledge::CoTKnowledge;

inline void check_text_length(const Sample& s, std::size_t n_max) {
  if (s.tokens.size() > n_max)
    throw TextTooLongError("sample '" + s.id + "' has " + std::to_string(s.tokens.size()) +
                           " tokens; the encoder accepts at most " + std::to_string(n_max));
}

/// Token sequence [x; SEP; caption; SEP; knowledge], right-truncated to
/// `context` positions. Text tokens are never truncated. Trailing empty
/// segments are omitted, so text with no caption and no knowledge is [x].
inline std::vector<std::string> build_knowledge_view(const Sample& sample, const CoTKnowledge* knowledge,
                                                     std::size_t n_max, std::size_t context) {
  check_text_length(sample, n_max);
  std::vector<std::string> caption, facts;
  std::string caption_text = knowledge && !knowledge->caption.empty() ? knowledge->caption : sample.caption.value_or("");
  caption = text::split_whitespace(caption_text);
  if (knowledge) {
    for (const auto* field : {&knowledge->noun, &knowledge->sentence, &knowledge->multimodality})
      for (auto& t : text::split_whitespace(*field)) facts.push_back(std::move(t));
  }
  std::vector<std::string> out = sample.tokens;
  if (!caption.empty() || !facts.empty()) {
    out.push_back(Vocabulary::kSep);
    out.insert(out.end(), caption.begin(), caption.end());
  }
  if (!facts.empty()) {
    out.push_back(Vocabulary::kSep);
    out.insert(out.end(), facts.begin(), facts.end());
  }
  if (out.size() > context) out.resize(std::max(context, sample.tokens.size()));
  return out;
}

/// An embedded encoder input and where its text tokens sit.
struct ViewInput {
  ad::Var embedded;
  std::size_t text_offset = 0;
  std::size_t text_length = 0;
};

struct Prediction {
  std::vector<std::string> tags;  // NER
  std::string relation;           // RE
};

struct TrainingGraph {
  ad::Var total;
  LossBundle losses;
};

/// The compact student: word embeddings, the shared encoder, the variant's
/// prompt parameters and a task head.
class StudentModel {
 public:
  StudentModel(StudentConfig config, Task task, Vocabulary vocab, LabelSet labels)
      : config_(config), task_(task), vocab_(std::move(vocab)), labels_(std::move(labels)) {
    config_.validate();
    if (labels_.size() < 2) throw LabelError("need at least two output labels");
    std::mt19937_64 rng(config_.seed);
    const auto d = config_.d;
    embeddings_ = detail::random_parameter(vocab_.size(), d, 0.1, rng);
    encoder_ = Encoder::init(config_.context(), d, config_.layers, config_.heads, config_.ffn, rng);
    const auto head_in = task_ == Task::NER ? d : 2 * d;
    head_w_ = detail::random_parameter(head_in, labels_.size(), 1.0 / std::sqrt(static_cast<double>(head_in)), rng);
    head_b_ = detail::filled_parameter(1, labels_.size(), 0.0);
    switch (config_.variant) {
      case Variant::CPD: prompt_ = PromptGeneratorParams::init(config_.prompt_length, d, rng); break;
      case Variant::UPD:
      case Variant::PREFIXD: prompt_vectors_ = detail::random_parameter(config_.prompt_length, d, 0.1, rng); break;
      case Variant::MV:
      case Variant::NONE: break;
    }
  }

  // Parameters are shared graph leaves; copies would alias them. Use clone().
  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;
  StudentModel(StudentModel&&) = default;
  StudentModel& operator=(StudentModel&&) = default;

  /// Deep copy of the parameter values, in parameters() order.
  std::vector<ad::Matrix> snapshot() const {
    std::vector<ad::Matrix> out;
    for (const auto& p : parameters()) out.push_back(p.var.value());
    return out;
  }

  void restore(const std::vector<ad::Matrix>& values) {
    auto params = parameters();
    if (values.size() != params.size()) throw ShapeError("restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& target = params[i].var.mutable_value();
      if (target.rows() != values[i].rows() || target.cols() != values[i].cols())
        throw ShapeError("restore: shape mismatch for " + params[i].name);
      target = values[i];
    }
  }

  StudentModel clone() const {
    StudentModel copy(config_, task_, vocab_, labels_);
    copy.restore(snapshot());
    return copy;
  }

  const StudentConfig& config() const { return config_; }
  StudentConfig& mutable_config() { return config_; }
  Task task() const { return task_; }
  const Vocabulary& vocab() const { return vocab_; }
  const LabelSet& labels() const { return labels_; }

  /// All trainable tensors with stable names. Groups are the name prefixes
  /// "embedding", "encoder", "head" and "prompt".
  std::vector<NamedParameter> parameters() const {
    std::vector<NamedParameter> out{{"embedding.tokens", embeddings_}};
    encoder_.collect(out);
    out.push_back({"head.w", head_w_});
    out.push_back({"head.b", head_b_});
    if (prompt_) {
      out.push_back({"prompt.q", prompt_->q});
      out.push_back({"prompt.W_q", prompt_->w_q});
      out.push_back({"prompt.W_k", prompt_->w_k});
      out.push_back({"prompt.W_v", prompt_->w_v});
    }
    if (prompt_vectors_) out.push_back({"prompt.q", *prompt_vectors_});
    return out;
  }

  std::size_t parameter_count(const std::string& group_prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : parameters())
      if (p.name.rfind(group_prefix, 0) == 0) n += static_cast<std::size_t>(p.var.value().size());
    return n;
  }

  const Encoder& encoder() const { return encoder_; }
  const std::optional<PromptGeneratorParams>& prompt_generator() const { return prompt_; }

  ad::Var embed(const std::vector<std::string>& tokens) const { return ad::gather_rows(embeddings_, vocab_.ids(tokens)); }

  ViewInput knowledge_view(const Sample& s, const CoTKnowledge* k) const {
    if (config_.use_knowledge && !k)
      throw MissingKnowledgeError({s.id});
    auto tokens = build_knowledge_view(s, config_.use_knowledge ? k : nullptr, config_.n_max, config_.context());
    return {embed(tokens), 0, s.tokens.size()};
  }

  ViewInput text_only_view(const Sample& s) const {
    check_text_length(s, config_.n_max);
    return {embed(s.tokens), 0, s.tokens.size()};
  }

  /// [x; p] for CPD, [x; q] for UPD, [q; x] for PREFIXD. Prompt rows are
  /// embedding-space vectors and bypass the token embedder.
  ViewInput prompt_view(const Sample& s) const {
    check_text_length(s, config_.n_max);
    auto text = embed(s.tokens);
    const auto n = s.tokens.size();
    switch (config_.variant) {
      case Variant::CPD: return {ad::concat_rows({text, generate_conditional_prompt(*prompt_, text).prompt}), 0, n};
      case Variant::UPD: return {ad::concat_rows({text, *prompt_vectors_}), 0, n};
      case Variant::PREFIXD: return {ad::concat_rows({*prompt_vectors_, text}), config_.prompt_length, n};
      case Variant::MV:
      case Variant::NONE: break;
    }
    throw ConfigError(std::string("variant '") + to_string(config_.variant) + "' has no prompt view");
  }

  /// Runs the shared encoder and the task head over the text positions.
  ViewOutputs encode(const ViewInput& view, const Sample& s) const {
    if (static_cast<std::size_t>(view.embedded.rows()) > config_.context())
      throw ShapeError("view of length " + std::to_string(view.embedded.rows()) + " exceeds the encoder context");
    ViewOutputs out;
    out.hidden = encoder_.forward(view.embedded);
    out.text_offset = view.text_offset;
    out.text_length = view.text_length;
    const auto off = static_cast<Eigen::Index>(view.text_offset);
    if (task_ == Task::NER) {
      auto text = ad::slice_rows(out.hidden, off, static_cast<Eigen::Index>(view.text_length));
      out.log_probs = ad::log_softmax_rows(ad::add_row(ad::matmul(text, head_w_), head_b_));
    } else {
      auto pool = [&](const Span& sp) {
        return ad::mean_rows(ad::slice_rows(out.hidden, off + static_cast<Eigen::Index>(sp.start),
                                            static_cast<Eigen::Index>(sp.length())));
      };
      auto features = ad::concat_cols({pool(s.head_span.value()), pool(s.tail_span.value())});
      out.log_probs = ad::log_softmax_rows(ad::add_row(ad::matmul(features, head_w_), head_b_));
    }
    return out;
  }

  std::vector<std::size_t> gold_indices(const Sample& s) const {
    if (s.task != task_) throw ValidationError("sample '" + s.id + "' does not match the model task");
    std::vector<std::size_t> gold;
    if (task_ == Task::NER) {
      for (const auto& t : s.ner_tags) gold.push_back(labels_.index(t));
    } else {
      gold.push_back(labels_.index(s.relation.value()));
    }
    return gold;
  }

  /// nll on the knowledge-enhanced view plus alpha times the variant's
  /// distillation term.
  TrainingGraph training_loss(const Sample& s, const CoTKnowledge* k) const {
    auto view_k = encode(knowledge_view(s, k), s);
    auto nll = nll_loss(view_k, gold_indices(s));
    ad::Var distill;
    switch (config_.variant) {
      case Variant::CPD:
      case Variant::UPD:
      case Variant::PREFIXD: distill = cpd_loss(view_k, encode(prompt_view(s), s), config_.detach_teacher); break;
      case Variant::MV: distill = mv_align_loss(encode(text_only_view(s), s), view_k, config_.detach_teacher); break;
      case Variant::NONE: distill = ad::constant(ad::Matrix::Zero(1, 1)); break;
    }
    auto total = ad::combine_losses(nll, distill, config_.alpha);
    return {total, {nll.scalar(), distill.scalar(), total.scalar()}};
  }

  ViewOutputs forward(const Sample& s, PredictMode mode, const CoTKnowledge* k) const {
    switch (mode) {
      case PredictMode::KNOWLEDGE: return encode(knowledge_view(s, k), s);
      case PredictMode::PROMPT: return encode(prompt_view(s), s);
      case PredictMode::TEXT_ONLY: return encode(text_only_view(s), s);
    }
    throw ConfigError("unknown prediction mode");
  }

  /// Argmax decoding; NER tags are BIO-repaired. PROMPT and TEXT_ONLY need
  /// nothing beyond the text.
  Prediction predict(const Sample& s, PredictMode mode, const CoTKnowledge* k = nullptr) const {
    ad::NoGradGuard no_grad;
    auto out = forward(s, mode, k);
    const auto& lp = out.log_probs.value();
    Prediction p;
    for (Eigen::Index r = 0; r < lp.rows(); ++r) {
      Eigen::Index best = 0;
      lp.row(r).maxCoeff(&best);
      if (task_ == Task::NER) {
        p.tags.push_back(labels_.label(static_cast<std::size_t>(best)));
      } else {
        p.relation = labels_.label(static_cast<std::size_t>(best));
      }
    }
    if (task_ == Task::NER) bio::repair(p.tags);
    return p;
  }

  bool supports(PredictMode mode) const { return mode != PredictMode::PROMPT || has_prompt(config_.variant); }

  /// Mode a trained model is deployed (and selected) in.
  PredictMode deployment_mode() const {
    if (has_prompt(config_.variant)) return PredictMode::PROMPT;
    if (config_.variant == Variant::NONE && config_.use_knowledge) return PredictMode::KNOWLEDGE;
    return PredictMode::TEXT_ONLY;
  }

 private:
  StudentConfig config_;
  Task task_;
  Vocabulary vocab_;
  LabelSet labels_;
  ad::Var embeddings_;
  Encoder encoder_;
  ad::Var head_w_, head_b_;
  std::optional<PromptGeneratorParams> prompt_;
  std::optional<ad::Var> prompt_vectors_;
};

}  // namespace cotpd::model
