#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cotpd/model/autodiff.hpp"

namespace cotpd::model {

struct NamedParameter {
  std::string name;
  ad::Var var;
};

namespace detail {

inline ad::Var random_parameter(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ad::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng) * stddev;
  return ad::parameter(std::move(m));
}

inline ad::Var filled_parameter(std::size_t rows, std::size_t cols, double value) {
  return ad::parameter(ad::Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), value));
}

}  // namespace detail

/// Pre-norm transformer block: multi-head self-attention then a GELU MLP,
/// each wrapped in a residual connection.
struct EncoderLayer {
  ad::Var ln1_gain, ln1_bias;
  ad::Var w_q, w_k, w_v, w_o;
  ad::Var b_q, b_k, b_v, b_o;
  ad::Var ln2_gain, ln2_bias;
  ad::Var w_1, b_1, w_2, b_2;

  static EncoderLayer init(std::size_t d, std::size_t ffn, std::mt19937_64& rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(d));
    const double sf = 1.0 / std::sqrt(static_cast<double>(ffn));
    using detail::filled_parameter;
    using detail::random_parameter;
    EncoderLayer l;
    l.ln1_gain = filled_parameter(1, d, 1.0);
    l.ln1_bias = filled_parameter(1, d, 0.0);
    l.w_q = random_parameter(d, d, sd, rng);
    l.w_k = random_parameter(d, d, sd, rng);
    l.w_v = random_parameter(d, d, sd, rng);
    l.w_o = random_parameter(d, d, sd, rng);
    l.b_q = filled_parameter(1, d, 0.0);
    l.b_k = filled_parameter(1, d, 0.0);
    l.b_v = filled_parameter(1, d, 0.0);
    l.b_o = filled_parameter(1, d, 0.0);
    l.ln2_gain = filled_parameter(1, d, 1.0);
    l.ln2_bias = filled_parameter(1, d, 0.0);
    l.w_1 = random_parameter(d, ffn, sd, rng);
    l.b_1 = filled_parameter(1, ffn, 0.0);
    l.w_2 = random_parameter(ffn, d, sf, rng);
    l.b_2 = filled_parameter(1, d, 0.0);
    return l;
  }

  void collect(const std::string& prefix, std::vector<NamedParameter>& out) const {
    for (auto [name, v] : {std::pair{"ln1_gain", ln1_gain}, {"ln1_bias", ln1_bias}, {"w_q", w_q}, {"w_k", w_k},
                           {"w_v", w_v}, {"w_o", w_o}, {"b_q", b_q}, {"b_k", b_k}, {"b_v", b_v}, {"b_o", b_o},
                           {"ln2_gain", ln2_gain}, {"ln2_bias", ln2_bias}, {"w_1", w_1}, {"b_1", b_1},
                           {"w_2", w_2}, {"b_2", b_2}})
      out.push_back({prefix + name, v});
  }

  ad::Var forward(const ad::Var& h, std::size_t heads) const {
    const auto d = h.cols();
    const auto dh = d / static_cast<Eigen::Index>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto a = ad::layer_norm(h, ln1_gain, ln1_bias);
    auto q = ad::add_row(ad::matmul(a, w_q), b_q);
    auto k = ad::add_row(ad::matmul(a, w_k), b_k);
    auto v = ad::add_row(ad::matmul(a, w_v), b_v);
    std::vector<ad::Var> outs;
    outs.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
      const auto c0 = static_cast<Eigen::Index>(i) * dh;
      auto qh = heads == 1 ? q : ad::slice_cols(q, c0, dh);
      auto kh = heads == 1 ? k : ad::slice_cols(k, c0, dh);
      auto vh = heads == 1 ? v : ad::slice_cols(v, c0, dh);
      auto weights = ad::softmax_rows(ad::scale(ad::matmul_t(qh, kh), scale));
      outs.push_back(ad::matmul(weights, vh));
    }
    auto attended = heads == 1 ? outs.front() : ad::concat_cols(outs);
    auto h1 = ad::add(h, ad::add_row(ad::matmul(attended, w_o), b_o));
    auto b = ad::layer_norm(h1, ln2_gain, ln2_bias);
    auto f = ad::add_row(ad::matmul(ad::gelu(ad::add_row(ad::matmul(b, w_1), b_1)), w_2), b_2);
    return ad::add(h1, f);
  }
};

/// The shared text encoder E: learned positions, a stack of layers and a
/// final layer norm. Both views pass through this one instance.
struct Encoder {
  ad::Var positions;  // context × d
  std::vector<EncoderLayer> layers;
  ad::Var final_gain, final_bias;
  std::size_t heads = 1;

  static Encoder init(std::size_t context, std::size_t d, std::size_t n_layers, std::size_t heads, std::size_t ffn,
                      std::mt19937_64& rng) {
    Encoder e;
    e.heads = heads;
    e.positions = detail::random_parameter(context, d, 0.1, rng);
    for (std::size_t i = 0; i < n_layers; ++i) e.layers.push_back(EncoderLayer::init(d, ffn, rng));
    e.final_gain = detail::filled_parameter(1, d, 1.0);
    e.final_bias = detail::filled_parameter(1, d, 0.0);
    return e;
  }

  void collect(std::vector<NamedParameter>& out) const {
    out.push_back({"encoder.positions", positions});
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect("encoder.layer" + std::to_string(i) + ".", out);
    out.push_back({"encoder.final_gain", final_gain});
    out.push_back({"encoder.final_bias", final_bias});
  }

  std::size_t context() const { return static_cast<std::size_t>(positions.rows()); }

  /// Hidden states for an embedded sequence (L×d, L ≤ context).
  ad::Var forward(const ad::Var& embedded) const {
    auto h = ad::add(embedded, ad::slice_rows(positions, 0, embedded.rows()));
    for (const auto& l : layers) h = l.forward(h, heads);
    return ad::layer_norm(h, final_gain, final_bias);
  }
};

}  // namespace cotpd::model
