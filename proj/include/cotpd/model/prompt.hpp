#pragma once

#include <cmath>
#include <random>

#include "cotpd/error.hpp"
#include "cotpd/model/autodiff.hpp"

namespace cotpd::model {

/// Learnable queries q (N×d) and the query/key/value projections (d×d).
struct PromptGeneratorParams {
  ad::Var q, w_q, w_k, w_v;

  static PromptGeneratorParams init(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto rand = [&](std::size_t r, std::size_t c, double stddev) {
      ad::Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * stddev;
      return ad::parameter(std::move(m));
    };
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {rand(n, d, 0.1), rand(d, d, s), rand(d, d, s), rand(d, d, s)};
  }
};

struct ConditionalPrompt {
  ad::Var prompt;     // N×d
  ad::Var attention;  // N×n, rows sum to 1
};

/// p = softmax((q W_q)(X W_k)ᵀ / √d) · (X W_v), softmax over the n text rows of X.
inline ConditionalPrompt generate_conditional_prompt(const PromptGeneratorParams& params, const ad::Var& text) {
  if (text.rows() < 1) throw ShapeError("conditional prompt needs at least one text token");
  if (text.cols() != params.w_k.rows()) throw ShapeError("text embedding width does not match the projections");
  if (!text.value().allFinite() || !params.q.value().allFinite() || !params.w_q.value().allFinite() ||
      !params.w_k.value().allFinite() || !params.w_v.value().allFinite())
    throw NumericError("non-finite input to the conditional prompt generator");
  const double scale = 1.0 / std::sqrt(static_cast<double>(text.cols()));
  auto queries = ad::matmul(params.q, params.w_q);
  auto keys = ad::matmul(text, params.w_k);
  auto values = ad::matmul(text, params.w_v);
  auto weights = ad::softmax_rows(ad::scale(ad::matmul_t(queries, keys), scale));
  return {ad::matmul(weights, values), weights};
}

/// Value-only overload for plain matrices.
inline ad::Matrix generate_conditional_prompt(const ad::Matrix& q, const ad::Matrix& w_q, const ad::Matrix& w_k,
                                              const ad::Matrix& w_v, const ad::Matrix& text) {
  PromptGeneratorParams p{ad::constant(q), ad::constant(w_q), ad::constant(w_k), ad::constant(w_v)};
  return generate_conditional_prompt(p, ad::constant(text)).prompt.value();
}

}  // namespace cotpd::model
