#include <gtest/gtest.h>

#include "cotpd/model/checkpoint.hpp"
#include "cotpd/synthetic.hpp"
#include "cotpd/trainer/experiments.hpp"
#include "test_util.hpp"

using namespace cotpd;
using namespace cotpd::trainer;

namespace {

struct Fixture {
  synthetic::Corpus corpus;
  std::shared_ptr<knowledge::ScriptedBackend> backend;
  std::unique_ptr<knowledge::LlmGateway> gateway;
  std::unique_ptr<knowledge::CaptionService> captions;
  KnowledgeStore store;
  KnowledgeSource src;

  explicit Fixture(std::size_t samples = 60) {
    synthetic::Options opt;
    opt.samples = samples;
    corpus = synthetic::make_corpus(opt);
    backend = std::make_shared<knowledge::ScriptedBackend>(corpus.script);
    gateway = std::make_unique<knowledge::LlmGateway>(backend);
    captions = std::make_unique<knowledge::CaptionService>(
        std::make_shared<knowledge::ScriptedCaptionProvider>(corpus.captions));
    src = {gateway.get(), captions.get(), &store, {}};
    ensure_knowledge(corpus.samples, src);
  }
};

TrainConfig small_config(model::Variant v = model::Variant::CPD) {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  c.learning_rate = 3e-3;
  c.model.d = 8;
  c.model.n_max = 12;
  c.model.extra_tokens = 24;
  c.model.prompt_length = 2;
  c.model.layers = 1;
  c.model.heads = 2;
  c.model.ffn = 16;
  c.model.variant = v;
  return c;
}

}  // namespace

TEST(Train, SameSeedGivesIdenticalLosses) {
  Fixture f;
  Splits data{std::vector<Sample>(f.corpus.splits.train.begin(), f.corpus.splits.train.begin() + 16),
              f.corpus.splits.dev, {}};
  auto a = train(small_config(), data, &f.store);
  auto b = train(small_config(), data, &f.store);
  ASSERT_EQ(a.report.steps.size(), b.report.steps.size());
  EXPECT_EQ(a.report.steps.size(), 4u);
  for (std::size_t i = 0; i < a.report.steps.size(); ++i) {
    EXPECT_EQ(a.report.steps[i].losses.total, b.report.steps[i].losses.total);
    EXPECT_EQ(a.report.steps[i].losses.nll, b.report.steps[i].losses.nll);
  }
  EXPECT_EQ(a.report.to_json(false).dump(), b.report.to_json(false).dump());
  auto other = small_config();
  other.seed = 8;
  auto c = train(other, data, &f.store);
  EXPECT_NE(c.report.steps.front().losses.total, a.report.steps.front().losses.total);
}

TEST(Train, ZeroAlphaTotalEqualsNll) {
  Fixture f;
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.model.alpha = 0.0;
  auto r = train(cfg, {f.corpus.splits.train, {}, {}}, &f.store);
  for (const auto& s : r.report.steps) {
    EXPECT_EQ(s.losses.total, s.losses.nll);
    EXPECT_GE(s.losses.cpd, 0.0);
  }
}

TEST(Train, LossDecreases) {
  Fixture f(120);
  auto cfg = small_config();
  cfg.epochs = 6;
  auto r = train(cfg, f.corpus.splits, &f.store);
  ASSERT_EQ(r.report.epochs.size(), 6u);
  EXPECT_LT(r.report.epochs.back().losses.total, r.report.epochs.front().losses.total);
  EXPECT_TRUE(r.report.dev.contains(PredictMode::PROMPT));
  EXPECT_TRUE(r.report.test.contains(PredictMode::KNOWLEDGE));
}

TEST(Train, MissingKnowledgeNamesSamples) {
  Fixture f;
  KnowledgeStore partial;
  partial.put(*f.store.find(f.corpus.splits.train[0].id));
  try {
    train(small_config(), {f.corpus.splits.train, {}, {}}, &partial);
    FAIL() << "expected MissingKnowledgeError";
  } catch (const MissingKnowledgeError& e) {
    EXPECT_EQ(e.sample_ids().size(), f.corpus.splits.train.size() - 1);
    EXPECT_EQ(e.sample_ids().front(), f.corpus.splits.train[1].id);
  }
}

TEST(Train, RejectsBadConfig) {
  Fixture f;
  auto cfg = small_config();
  cfg.lr_grid = {1e-3};
  EXPECT_THROW(grid_search(cfg, f.corpus.splits, &f.store), ConfigError);
  cfg.lr_grid.clear();
  cfg.epochs = 0;
  EXPECT_THROW(train(cfg, f.corpus.splits, &f.store), ConfigError);
  EXPECT_THROW(train(small_config(), {{}, {}, {}}, &f.store), ValidationError);
}

TEST(Train, GridRunsEveryRate) {
  Fixture f;
  auto cfg = small_config();
  cfg.epochs = 1;
  cfg.lr_grid = {1e-5, 5e-5};
  auto g = grid_search(cfg, f.corpus.splits, &f.store);
  ASSERT_EQ(g.runs.size(), 2u);
  EXPECT_EQ(g.runs[0].learning_rate, 1e-5);
  EXPECT_EQ(g.runs[1].learning_rate, 5e-5);
  ASSERT_TRUE(g.best_run);
  EXPECT_EQ(g.best_run->report.learning_rate, g.runs[g.best].learning_rate);
}

TEST(Evaluate, GoldPredictionsScoreOne) {
  std::vector<std::vector<Span>> gold;
  Fixture f;
  for (const auto& s : f.corpus.splits.test) gold.push_back(bio::decode(s.ner_tags));
  EXPECT_EQ(span_f1(gold, gold).f1, 1.0);
}

TEST(Evaluate, PromptModeReadsNoKnowledge) {
  Fixture f;
  auto r = train(small_config(), f.corpus.splits, &f.store);
  const auto reads = f.store.reads();
  const auto calls = f.gateway->provider_calls();
  auto report = evaluate(r.model, f.corpus.splits.test, PredictMode::PROMPT, &f.store);
  EXPECT_EQ(f.store.reads(), reads);
  EXPECT_EQ(f.gateway->provider_calls(), calls);
  EXPECT_GE(report.f1, 0.0);
  evaluate(r.model, f.corpus.splits.test, PredictMode::KNOWLEDGE, &f.store);
  EXPECT_GE(f.store.reads(), reads + f.corpus.splits.test.size());
  EXPECT_THROW(evaluate(r.model, f.corpus.splits.test, PredictMode::KNOWLEDGE, nullptr), MissingKnowledgeError);
}

TEST(Evaluate, CheckpointReloadGivesSameScores) {
  testutil::TempDir dir;
  Fixture f;
  auto r = train(small_config(), f.corpus.splits, &f.store);
  model::save_checkpoint(r.model, dir / "m.json");
  auto back = model::load_checkpoint(dir / "m.json");
  for (auto mode : {PredictMode::KNOWLEDGE, PredictMode::PROMPT, PredictMode::TEXT_ONLY})
    EXPECT_EQ(evaluate(r.model, f.corpus.splits.dev, mode, &f.store),
              evaluate(back, f.corpus.splits.dev, mode, &f.store));
  EXPECT_EQ(evaluate(back, f.corpus.splits.dev, PredictMode::PROMPT, &f.store),
            r.report.dev.at(PredictMode::PROMPT));
}

TEST(Variants, ReportListsEveryVariant) {
  Fixture f;
  auto cfg = small_config();
  cfg.epochs = 1;
  using model::Variant;
  auto rep = compare_variants(cfg, {Variant::CPD, Variant::UPD, Variant::PREFIXD, Variant::MV}, f.corpus.splits,
                              &f.store);
  ASSERT_EQ(rep.rows.size(), 4u);
  EXPECT_EQ(rep.rows[3].deployment, PredictMode::TEXT_ONLY);
  EXPECT_EQ(rep.rows[0].deployment, PredictMode::PROMPT);
  auto again = compare_variants(cfg, {Variant::CPD, Variant::UPD, Variant::PREFIXD, Variant::MV}, f.corpus.splits,
                                &f.store);
  EXPECT_EQ(rep.to_json(false).dump(), again.to_json(false).dump());
  EXPECT_NE(rep.table().find("prefixd"), std::string::npos);
}

TEST(CrossDomain, ThreeSettingsAndPoolChecks) {
  Fixture f;
  synthetic::Options topt;
  topt.samples = 30;
  topt.seed = 5;
  topt.style_shift = true;
  topt.id_prefix = "tgt";
  auto target = synthetic::make_corpus(topt);
  auto cfg = small_config();
  cfg.epochs = 1;
  CrossDomainOptions opt;
  opt.zero_shot_count = 8;
  auto rep = cross_domain_eval(f.corpus.splits, target.samples, cfg, f.src, opt);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].setting, "w/o aug");
  EXPECT_EQ(rep.rows[1].setting, "w/ in-domain aug");
  EXPECT_EQ(rep.rows[2].setting, "w/ zero-shot aug");
  EXPECT_GT(rep.rows[1].train_samples, rep.rows[0].train_samples);

  augment::EntityPool overlapping;
  overlapping.origin = augment::EntityPool::Origin::ZERO_SHOT;
  overlapping.add("PER", f.corpus.splits.train[0].tokens[bio::decode(f.corpus.splits.train[0].ner_tags)[0].start]);
  opt.zero_shot_pool = overlapping;
  EXPECT_THROW(cross_domain_eval(f.corpus.splits, target.samples, cfg, f.src, opt), ValidationError);

  auto unrelated = target.samples;
  for (auto& s : unrelated)
    for (auto& t : s.ner_tags)
      if (t != "O") t = t.substr(0, 2) + "EVENT";
  EXPECT_THROW(cross_domain_eval(f.corpus.splits, unrelated, cfg, f.src, {}), LabelError);
}

TEST(CrossDomain, RestrictLabels) {
  std::vector<Sample> s{testutil::ner_sample("a", {"x", "y"}, {"B-PER", "B-LOC"})};
  auto r = restrict_labels(s, {"PER"});
  EXPECT_EQ(r[0].ner_tags, (std::vector<std::string>{"B-PER", "O"}));
}

TEST(Curve, NoAugmentationMakesNoCalls) {
  Fixture f;
  auto cfg = small_config();
  cfg.epochs = 1;
  const auto calls = f.gateway->provider_calls();
  auto rep = augmentation_curve(f.corpus.splits, {10, 20}, {0}, cfg, {}, f.src);
  EXPECT_EQ(f.gateway->provider_calls(), calls);
  ASSERT_EQ(rep.points.size(), 2u);
  EXPECT_EQ(rep.points[0].augmented, 0u);
  EXPECT_EQ(rep.csv().substr(0, rep.csv().find('\n')), "size,times,precision,recall,f1,seed");
  EXPECT_THROW(augmentation_curve(f.corpus.splits, {1000}, {0}, cfg, {}, f.src), ValidationError);
}

TEST(Curve, SubsamplesAreNested) {
  Fixture f;
  auto small = subsample(f.corpus.splits.train, 10, 3), big = subsample(f.corpus.splits.train, 20, 3);
  for (std::size_t i = 0; i < small.size(); ++i) EXPECT_EQ(small[i].id, big[i].id);
}
