#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cotpd/model/student.hpp"
#include "cotpd/model/checkpoint.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace cotpd;
using namespace cotpd::model;

TEST(ConditionalPrompt, SingleKeyCopiesValueRow) {
  ad::Matrix q = ad::Matrix::Random(3, 4);
  ad::Matrix wq = ad::Matrix::Random(4, 4), wk = ad::Matrix::Random(4, 4), wv = ad::Matrix::Random(4, 4);
  ad::Matrix x = ad::Matrix::Random(1, 4);
  auto p = generate_conditional_prompt(q, wq, wk, wv, x);
  ad::Matrix expected = x * wv;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(p(r, c), expected(0, c), 1e-12);
}

using testutil::tiny_knowledge;
using testutil::tiny_model;

TEST(GradientCheck, AllVariantsMatchFiniteDifferences) {
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves", "wand"}, {"B-PER", "I-PER", "O", "O"});
  auto k = tiny_knowledge();
  for (auto v : {Variant::CPD, Variant::UPD, Variant::PREFIXD, Variant::MV}) {
    auto m = tiny_model(v);
    auto errors = testutil::gradient_check(m, [&] { return m.training_loss(s, &k).total; });
    for (const auto& [name, err] : errors) EXPECT_LT(err, 1e-4) << to_string(v) << " " << name;
  }
}

TEST(ConditionalPrompt, TwoTokenHandOracle) {
  // N=1, n=2, d=2 with identity projections.
  ad::Matrix eye = ad::Matrix::Identity(2, 2);
  ad::Matrix q(1, 2), x(2, 2);
  q << 1.0, 0.0;
  x << 1.0, 0.0, 0.0, 1.0;
  PromptGeneratorParams params{ad::constant(q), ad::constant(eye), ad::constant(eye), ad::constant(eye)};
  auto out = generate_conditional_prompt(params, ad::constant(x));
  auto expected = oracle::attention_two_keys({1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0});
  EXPECT_NEAR(out.attention.value()(0, 0), expected[0], 1e-9);
  EXPECT_NEAR(out.attention.value()(0, 1), expected[1], 1e-9);
  // values are the rows of x, so the prompt is the weight vector itself
  EXPECT_NEAR(out.prompt.value()(0, 0), expected[0], 1e-9);
  EXPECT_NEAR(out.prompt.value()(0, 1), expected[1], 1e-9);

  // Identical keys split attention evenly.
  x << 1.0, 2.0, 1.0, 2.0;
  auto even = generate_conditional_prompt(params, ad::constant(x));
  EXPECT_NEAR(even.attention.value()(0, 0), 0.5, 1e-9);
  EXPECT_NEAR(even.attention.value()(0, 1), 0.5, 1e-9);
}

TEST(ConditionalPrompt, AttentionRowsSumToOne) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> dim(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = dim(rng), d = dim(rng), big_n = dim(rng);
    auto params = PromptGeneratorParams::init(static_cast<std::size_t>(big_n), static_cast<std::size_t>(d), rng);
    ad::Matrix x(n, d);
    std::normal_distribution<double> normal(0.0, 3.0);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    auto out = generate_conditional_prompt(params, ad::constant(x));
    ASSERT_EQ(out.attention.rows(), big_n);
    ASSERT_EQ(out.attention.cols(), n);
    for (Eigen::Index r = 0; r < big_n; ++r) {
      EXPECT_NEAR(out.attention.value().row(r).sum(), 1.0, 1e-6);
      EXPECT_GE(out.attention.value().row(r).minCoeff(), 0.0);
    }
  }
}

TEST(ConditionalPrompt, RejectsBadInput) {
  std::mt19937_64 rng(1);
  auto params = PromptGeneratorParams::init(2, 4, rng);
  EXPECT_THROW(generate_conditional_prompt(params, ad::constant(ad::Matrix::Zero(0, 4))), ShapeError);
  EXPECT_THROW(generate_conditional_prompt(params, ad::constant(ad::Matrix::Zero(3, 5))), ShapeError);
  ad::Matrix nan = ad::Matrix::Zero(2, 4);
  nan(1, 1) = std::nan("");
  EXPECT_THROW(generate_conditional_prompt(params, ad::constant(nan)), NumericError);
}

TEST(Losses, KlOracleTwoRows) {
  ad::Matrix pk(2, 2), pp(2, 2);
  pk << 0.5, 0.5, 0.5, 0.5;
  pp << 0.9, 0.1, 0.9, 0.1;
  auto vk = ViewOutputs::from_probabilities(pk), vp = ViewOutputs::from_probabilities(pp);
  const double expected = (oracle::kl({0.5, 0.5}, {0.9, 0.1}) + oracle::kl({0.5, 0.5}, {0.9, 0.1})) / 2;
  EXPECT_NEAR(expected, 0.5108, 1e-4);
  EXPECT_NEAR(cpd_loss(vk, vp).scalar(), expected, 1e-6);
  EXPECT_NEAR(mv_align_loss(vp, vk).scalar(), expected, 1e-6);
  EXPECT_NEAR(cpd_loss(vk, vk).scalar(), 0.0, 1e-9);
  EXPECT_THROW(cpd_loss(vk, ViewOutputs::from_probabilities(ad::Matrix::Constant(3, 2, 0.5))), ShapeError);
}

TEST(Losses, KlNonNegativeOnRandomDistributions) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    ad::Matrix a(3, 5), b(3, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = u(rng) * u(rng);
      b.data()[i] = u(rng);
    }
    for (Eigen::Index r = 0; r < 3; ++r) {
      a.row(r) /= a.row(r).sum();
      b.row(r) /= b.row(r).sum();
    }
    auto va = ViewOutputs::from_probabilities(a), vb = ViewOutputs::from_probabilities(b);
    EXPECT_GE(cpd_loss(va, vb).scalar(), 0.0);
    EXPECT_NEAR(cpd_loss(va, va).scalar(), 0.0, 1e-12);
  }
}

TEST(Losses, NllOraclesAndClamp) {
  auto uniform = ViewOutputs::from_probabilities(ad::Matrix::Constant(2, 9, 1.0 / 9));
  EXPECT_NEAR(nll_loss(uniform, {0, 4}).scalar(), std::log(9.0), 1e-12);
  ad::Matrix onehot = ad::Matrix::Zero(2, 3);
  onehot(0, 1) = 1.0;
  onehot(1, 2) = 1.0;
  auto sure = ViewOutputs::from_probabilities(onehot);
  EXPECT_NEAR(nll_loss(sure, {1, 2}).scalar(), 0.0, 1e-12);
  const double clamped = nll_loss(sure, {0, 0}).scalar();
  EXPECT_TRUE(std::isfinite(clamped));
  EXPECT_NEAR(clamped, -std::log(ad::kProbFloor), 1e-9);
  EXPECT_THROW(nll_loss(sure, {5, 0}), LabelError);
}

TEST(Losses, TotalIsExactCombination) {
  EXPECT_EQ(total_loss(1.0, 0.5, 2.0).total, 2.0);
  EXPECT_EQ(total_loss(0.7312, 0.2, 0.0).total, 0.7312);
  EXPECT_THROW(total_loss(1.0, 1.0, -0.1), ConfigError);
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves", "wand"}, {"B-PER", "I-PER", "O", "O"});
  auto k = tiny_knowledge();
  for (double alpha : {0.0, 0.3, 1.0}) {
    auto m = tiny_model(Variant::CPD);
    m.mutable_config().alpha = alpha;
    auto g = m.training_loss(s, &k);
    EXPECT_EQ(g.losses.total, g.losses.nll + alpha * g.losses.cpd);
    EXPECT_EQ(g.losses.total, total_loss(g.losses.nll, g.losses.cpd, alpha).total);
    if (alpha == 0.0) EXPECT_EQ(g.losses.total, g.losses.nll);
  }
}

TEST(GradientCheck, RelationAndBaseline) {
  auto re = testutil::re_sample("s", {"harry", "potter", "waves", "wand"}, "/per/loc", {0, 2, "PER"}, {3, 4, "LOC"});
  auto k = tiny_knowledge();
  for (auto v : {Variant::CPD, Variant::PREFIXD, Variant::NONE}) {
    auto m = tiny_model(v, Task::RE);
    auto errors = testutil::gradient_check(m, [&] { return m.training_loss(re, &k).total; });
    for (const auto& [name, err] : errors) EXPECT_LT(err, 1e-4) << to_string(v) << " " << name;
  }
}

TEST(StudentModel, ViewsShareOneEncoder) {
  auto cpd = tiny_model(Variant::CPD), mv = tiny_model(Variant::MV), none = tiny_model(Variant::NONE);
  EXPECT_EQ(cpd.parameter_count("encoder"), mv.parameter_count("encoder"));
  EXPECT_EQ(cpd.parameter_count("encoder"), none.parameter_count("encoder"));
  EXPECT_EQ(mv.parameter_count("prompt"), 0u);
  EXPECT_EQ(none.parameter_count("prompt"), 0u);
  EXPECT_EQ(cpd.parameter_count("prompt"), 2u * 8 + 3u * 8 * 8);
  EXPECT_EQ(tiny_model(Variant::UPD).parameter_count("prompt"), 2u * 8);

  // Both views of a CPD step put gradient into the very same encoder tensors.
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves", "wand"}, {"B-PER", "I-PER", "O", "O"});
  auto view_p = cpd.encode(cpd.prompt_view(s), s);
  ad::backward(nll_loss(view_p, cpd.gold_indices(s)));
  std::map<std::string, double> from_prompt;
  for (const auto& p : cpd.parameters()) from_prompt[p.name] = p.var.grad().norm();
  for (auto& p : cpd.parameters()) p.var.zero_grad();
  auto k = tiny_knowledge();
  auto view_k = cpd.encode(cpd.knowledge_view(s, &k), s);
  ad::backward(nll_loss(view_k, cpd.gold_indices(s)));
  for (const auto& p : cpd.parameters()) {
    if (p.name.rfind("encoder", 0) != 0 || p.name.find("b_k") != std::string::npos) continue;
    EXPECT_GT(from_prompt[p.name], 0.0) << p.name;
    EXPECT_GT(p.var.grad().norm(), 0.0) << p.name;
  }
}

TEST(StudentModel, TextPositionsAlign) {
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves"}, {"B-PER", "I-PER", "O"});
  auto k = tiny_knowledge();
  for (auto v : {Variant::CPD, Variant::UPD}) {
    auto m = tiny_model(v);
    auto p = m.prompt_view(s);
    EXPECT_EQ(p.text_offset, 0u);
    EXPECT_EQ(p.embedded.rows(), 3 + 2);
    EXPECT_EQ(m.knowledge_view(s, &k).text_offset, 0u);
    // text rows of the prompt view are exactly the token embeddings
    EXPECT_TRUE(p.embedded.value().topRows(3).isApprox(m.embed(s.tokens).value(), 0.0));
  }
  auto prefix = tiny_model(Variant::PREFIXD);
  auto p = prefix.prompt_view(s);
  EXPECT_EQ(p.text_offset, 2u);
  EXPECT_TRUE(p.embedded.value().bottomRows(3).isApprox(prefix.embed(s.tokens).value(), 0.0));
  auto out = prefix.encode(p, s);
  EXPECT_EQ(out.log_probs.rows(), 3);
}

TEST(StudentModel, KnowledgeViewLayout) {
  auto s = testutil::ner_sample("s", {"harry", "potter"}, {"B-PER", "I-PER"});
  auto k = tiny_knowledge();
  auto tokens = build_knowledge_view(s, &k, 4, 16);
  ASSERT_GE(tokens.size(), 4u);
  EXPECT_EQ(tokens[0], "harry");
  EXPECT_EQ(tokens[1], "potter");
  EXPECT_EQ(tokens[2], Vocabulary::kSep);
  EXPECT_LE(tokens.size(), 16u);
  auto m = tiny_model(Variant::CPD);
  EXPECT_THROW(m.knowledge_view(s, nullptr), MissingKnowledgeError);
}

TEST(StudentModel, PromptModeNeedsOnlyText) {
  auto s = testutil::ner_sample("s", {"harry", "unknownword", "waves"}, {"B-PER", "O", "O"});
  auto m = tiny_model(Variant::CPD);
  auto p = m.predict(s, PredictMode::PROMPT);
  EXPECT_EQ(p.tags.size(), 3u);
  EXPECT_TRUE(bio::is_valid(p.tags));
  EXPECT_THROW(m.predict(s, PredictMode::KNOWLEDGE), MissingKnowledgeError);
  EXPECT_THROW(tiny_model(Variant::MV).predict(s, PredictMode::PROMPT), ConfigError);
  auto too_long = testutil::ner_sample("l", {"a", "b", "c", "d", "e"}, {"O", "O", "O", "O", "O"});
  EXPECT_THROW(m.predict(too_long, PredictMode::PROMPT), TextTooLongError);
}

TEST(StudentModel, SeededInitIsDeterministic) {
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves"}, {"B-PER", "I-PER", "O"});
  auto a = tiny_model(Variant::CPD), b = tiny_model(Variant::CPD);
  EXPECT_EQ(a.predict(s, PredictMode::PROMPT).tags, b.predict(s, PredictMode::PROMPT).tags);
  auto sa = a.snapshot(), sb = b.snapshot();
  for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i], sb[i]);
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  testutil::TempDir dir;
  auto s = testutil::ner_sample("s", {"harry", "potter", "waves", "wand"}, {"B-PER", "I-PER", "O", "O"});
  auto k = tiny_knowledge();
  for (auto v : {Variant::CPD, Variant::PREFIXD, Variant::MV}) {
    auto m = tiny_model(v);
    save_checkpoint(m, dir / "m.json");
    auto back = load_checkpoint(dir / "m.json");
    EXPECT_EQ(back.config().variant, v);
    auto a = m.snapshot(), b = back.snapshot();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_EQ(m.forward(s, PredictMode::KNOWLEDGE, &k).log_probs.value(),
              back.forward(s, PredictMode::KNOWLEDGE, &k).log_probs.value());
  }
  testutil::write_file(dir / "bad.json", "{\"format\": \"other\"}");
  EXPECT_THROW(load_checkpoint(dir / "bad.json"), Error);
}
