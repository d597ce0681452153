#pragma once

#include <cmath>
#include <vector>

#include "cotpd/error.hpp"
#include "cotpd/model/autodiff.hpp"

namespace cotpd::model {

using ad::Matrix;

/// Encoder output for one view. `log_probs` holds one row per text token
/// (NER) or a single row over relations (RE).
struct ViewOutputs {
  ad::Var hidden;
  ad::Var log_probs;
  std::size_t text_offset = 0;
  std::size_t text_length = 0;

  Matrix probabilities() const { return log_probs.value().array().exp().matrix(); }

  /// Wraps fixed probability rows (clamped at 1e-12) as a constant view.
  static ViewOutputs from_probabilities(const Matrix& p) {
    ViewOutputs v;
    v.log_probs = ad::constant(p.cwiseMax(ad::kProbFloor).array().log().matrix());
    v.text_length = static_cast<std::size_t>(p.rows());
    return v;
  }
};

struct LossBundle {
  double nll = 0.0;
  double cpd = 0.0;
  double total = 0.0;
};

inline void check_aligned(const ViewOutputs& a, const ViewOutputs& b) {
  if (a.log_probs.rows() != b.log_probs.rows() || a.log_probs.cols() != b.log_probs.cols())
    throw ShapeError("distillation views disagree: " + std::to_string(a.log_probs.rows()) + "x" +
                     std::to_string(a.log_probs.cols()) + " vs " + std::to_string(b.log_probs.rows()) + "x" +
                     std::to_string(b.log_probs.cols()));
}

/// Mean over text positions of KL(knowledge view ‖ prompt view); a single KL
/// for relation vectors. With detach_teacher the knowledge side gets no gradient.
inline ad::Var cpd_loss(const ViewOutputs& view_k, const ViewOutputs& view_p, bool detach_teacher = false) {
  check_aligned(view_k, view_p);
  auto teacher = detach_teacher ? ad::detach(view_k.log_probs) : view_k.log_probs;
  return ad::kl_rows_mean(teacher, view_p.log_probs);
}

/// Multi-view alignment: the same KL, against the plain text view.
inline ad::Var mv_align_loss(const ViewOutputs& view_text_only, const ViewOutputs& view_k, bool detach_teacher = false) {
  return cpd_loss(view_k, view_text_only, detach_teacher);
}

/// Mean −log p(gold) over the rows of the knowledge-enhanced view.
inline ad::Var nll_loss(const ViewOutputs& view_k, const std::vector<std::size_t>& gold) {
  return ad::nll_rows_mean(view_k.log_probs, gold);
}

inline LossBundle total_loss(double nll, double cpd, double alpha) {
  if (alpha < 0) throw ConfigError("alpha must be >= 0");
  return {nll, cpd, nll + alpha * cpd};
}

}  // namespace cotpd::model
