#include <gtest/gtest.h>

#include <random>

#include "cotpd/augment/augment.hpp"
#include "cotpd/augment/corpus_augment.hpp"
#include "cotpd/corpus/validate.hpp"
#include "test_util.hpp"

using namespace cotpd;
using namespace cotpd::augment;
using knowledge::LlmGateway;
using knowledge::ScriptedBackend;

namespace {

LlmGateway scripted(nlohmann::json rules) { return LlmGateway(std::make_shared<ScriptedBackend>(std::move(rules))); }

nlohmann::json rule(const std::string& regex, const std::string& response) {
  return {{"regex", regex}, {"response", response}};
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::multiset<std::string> type_multiset(const Sample& s) {
  std::multiset<std::string> out;
  for (const auto& span : entity_spans(s)) out.insert(span.type);
  return out;
}

Sample obama() {
  return testutil::ner_sample("o", {"Barack", "Obama", "visited", "Paris"}, {"B-PER", "I-PER", "O", "B-LOC"});
}

}  // namespace

TEST(StyleAugment, RebuildsTagsOnSameSurfaces) {
  auto gw = scripted(nlohmann::json::array({rule("^Transform", "omg Barack Obama just hit up Paris 🔥")}));
  auto out = style_augment(obama(), gw);
  ASSERT_TRUE(out) << out.rejection;
  const auto& s = out.accepted->sample;
  EXPECT_EQ(s.id, "o#style0");
  EXPECT_TRUE(is_valid(s));
  auto before = entity_spans(obama()), after = entity_spans(s);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(surface(obama(), before[i]), surface(s, after[i]));
    EXPECT_EQ(before[i].type, after[i].type);
  }
  EXPECT_EQ(after[0], (Span{1, 3, "PER"}));
}

TEST(StyleAugment, Rejections) {
  auto dropped = scripted(nlohmann::json::array({rule("^Transform", "omg someone hit up Paris")}));
  auto r1 = style_augment(obama(), dropped);
  EXPECT_FALSE(r1);
  EXPECT_TRUE(r1.rejection.starts_with("entity not found"));
  auto twice = scripted(nlohmann::json::array({rule("^Transform", "Paris Barack Obama loves Paris")}));
  auto r2 = style_augment(obama(), twice);
  EXPECT_FALSE(r2);
  EXPECT_TRUE(r2.rejection.starts_with("ambiguous match"));
}

TEST(StyleAugment, RelationSampleKeepsArguments) {
  auto s = testutil::re_sample("r", {"Obama", "in", "Paris"}, "/per/loc/place_of_residence", {0, 1, "PER"},
                               {2, 3, "LOC"});
  auto gw = scripted(nlohmann::json::array({rule("^Transform", "rt Paris welcomes Obama")}));
  auto out = style_augment(s, gw);
  ASSERT_TRUE(out);
  EXPECT_EQ(out.accepted->sample.head_span, (Span{3, 4, "PER"}));
  EXPECT_EQ(out.accepted->sample.tail_span, (Span{1, 2, "LOC"}));
  EXPECT_EQ(out.accepted->sample.relation, s.relation);
}

TEST(EntityAugment, ReplacesAndFactChecks) {
  auto s = testutil::ner_sample("t", {"Tobey", "Maguire", "plays", "Spider-Man"}, {"B-PER", "I-PER", "O", "O"});
  EntityPool pool;
  pool.add("PER", "Barack Obama");
  auto yes = scripted(nlohmann::json::array({rule("^Whether", "Yes.")}));
  std::mt19937_64 rng(1);
  auto out = entity_augment(s, pool, yes, rng);
  ASSERT_TRUE(out);
  EXPECT_EQ(out.accepted->fact_verdict, Verdict::YES);
  EXPECT_EQ(out.accepted->replaced, (Replacement{"Tobey Maguire", "Barack Obama", "PER"}));
  EXPECT_EQ(out.accepted->sample.tokens, (std::vector<std::string>{"Barack", "Obama", "plays", "Spider-Man"}));

  auto no = scripted(nlohmann::json::array({rule("^Whether", "No, impossible")}));
  auto rejected = entity_augment(s, pool, no, rng);
  EXPECT_FALSE(rejected);
  EXPECT_EQ(rejected.fact_verdict, Verdict::NO);

  EntityPool other;
  other.add("LOC", "Paris");
  EXPECT_FALSE(entity_augment(s, other, yes, rng));
}

TEST(EntityAugment, LongerReplacementShiftsLaterSpans) {
  auto s = testutil::ner_sample("x", {"Tom", "Holland", "met", "Zendaya", "in", "Rome"},
                                {"B-PER", "I-PER", "O", "B-PER", "O", "B-LOC"});
  EntityPool pool;
  pool.add("PER", "Martin Luther King");
  auto gw = scripted(nlohmann::json::array({rule("^Whether", "yes")}));
  // Draw until the first span is the one replaced.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    auto out = entity_augment(s, pool, gw, rng);
    if (!out || out.accepted->replaced->old_text != "Tom Holland") continue;  // LOC has no pool entry
    const auto& a = out.accepted->sample;
    EXPECT_TRUE(is_valid(a));
    auto spans = entity_spans(a);
    EXPECT_EQ(spans, (std::vector<Span>{{0, 3, "PER"}, {4, 5, "PER"}, {6, 7, "LOC"}}));
    return;
  }
  FAIL() << "first span never drawn";
}

TEST(EntityAugment, SeededTrialsPreserveTypesAndValidity) {
  std::mt19937_64 gen(2024);
  const std::vector<std::string> types{"PER", "LOC", "ORG", "MISC"};
  EntityPool pool;
  pool.add("PER", "Ada Lovelace");
  pool.add("PER", "Pele");
  pool.add("LOC", "Rio de Janeiro");
  pool.add("LOC", "Oslo");
  pool.add("ORG", "Red Cross");
  pool.add("MISC", "Olympic Games Tokyo Edition");
  auto gw = scripted(nlohmann::json::array({rule("^Whether", "yes")}));
  std::uniform_int_distribution<std::size_t> len(1, 12);
  std::size_t accepted = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto n = len(gen);
    auto tags = testutil::random_tags(gen, n, types);
    bio::repair(tags);
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < n; ++i) tokens.push_back("w" + std::to_string(trial) + "_" + std::to_string(i));
    auto s = testutil::ner_sample("s" + std::to_string(trial), tokens, tags);
    std::mt19937_64 rng(static_cast<std::uint64_t>(trial));
    auto out = entity_augment(s, pool, gw, rng);
    if (entity_spans(s).empty()) {
      EXPECT_FALSE(out);
      continue;
    }
    ASSERT_TRUE(out) << out.rejection;
    ++accepted;
    const auto& a = out.accepted->sample;
    EXPECT_NO_THROW(validate(a));
    EXPECT_TRUE(bio::is_valid(a.ner_tags));
    EXPECT_EQ(type_multiset(a), type_multiset(s)) << "trial " << trial;
    EXPECT_TRUE(type_multiset(s).contains(out.accepted->replaced->type));
    std::mt19937_64 again(static_cast<std::uint64_t>(trial));
    EXPECT_EQ(entity_augment(s, pool, gw, again).accepted->sample.tokens, a.tokens);
  }
  EXPECT_GT(accepted, 100u);
}

TEST(EntityAugment, FactFilterKeepsExactlyScriptedYes) {
  EntityPool pool;
  pool.add("PER", "Zed");
  std::vector<Sample> base;
  std::set<std::string> expected;
  nlohmann::json rules = nlohmann::json::array();
  for (int i = 0; i < 12; ++i) {
    auto s = testutil::ner_sample("f" + std::to_string(i), {"Al", "ran", "mile" + std::to_string(i)}, {"B-PER", "O", "O"});
    base.push_back(s);
    auto answer = i % 3 == 0 ? "Yes, quite plausible" : (i % 3 == 1 ? "no." : "Maybe yes");
    if (i % 3 == 0) expected.insert(s.id);
    rules.push_back({{"exact", std::string("Whether the sentence is possible in fact, answer yes or no. Zed ran mile") +
                                   std::to_string(i)},
                     {"response", answer}});
  }
  auto gw = scripted(rules);
  AugmentConfig cfg;
  cfg.kinds = {AugmentKind::ENTITY};
  auto result = augment_corpus(base, gw, &pool, cfg);
  std::set<std::string> kept;
  for (const auto& a : result.samples) {
    kept.insert(a.base_id);
    EXPECT_EQ(a.fact_verdict, Verdict::YES);
  }
  EXPECT_EQ(kept, expected);
  EXPECT_EQ(result.stats.rejections.at("fact check answered"), 8u);
}

TEST(EntityAugment, AffirmativeParsing) {
  EXPECT_TRUE(is_affirmative("Yes."));
  EXPECT_TRUE(is_affirmative("  YES, it is"));
  EXPECT_FALSE(is_affirmative("No"));
  EXPECT_FALSE(is_affirmative("Yesterday"));
  EXPECT_FALSE(is_affirmative(""));
}

TEST(ImageAugment, CaptionOnly) {
  auto gw = scripted(nlohmann::json::array({rule("^What is a possible image", "a crowd at a stadium")}));
  auto s = obama();
  s.image_ref = "9";
  auto out = image_augment(s, gw);
  ASSERT_TRUE(out);
  EXPECT_EQ(out.accepted->sample.caption, "a crowd at a stadium");
  EXPECT_EQ(out.accepted->sample.ner_tags, s.ner_tags);
  EXPECT_EQ(out.accepted->sample.tokens, s.tokens);
  EXPECT_EQ(image_augment(s, gw).accepted->sample.caption, out.accepted->sample.caption);
  auto empty = scripted(nlohmann::json::array({rule("^What is a possible image", "  ")}));
  auto r = image_augment(s, empty);
  EXPECT_FALSE(r);
  EXPECT_EQ(r.rejection, "empty imagination");
}

TEST(ZeroShotPool, FiltersSourceOverlap) {
  std::vector<Sample> source{obama(), testutil::ner_sample("b", {"Apple", "hired", "Tim"}, {"B-ORG", "O", "B-PER"})};
  auto gw = scripted(nlohmann::json::array(
      {rule("^Provide a list of ",
            "Kendall Roy\tPER\nparis\tLOC\nGeneva\tLOC\nAPPLE\tORG\nNokia\tORG\nTetris\tMISC\n")}));
  auto pool = build_zero_shot_pool(gw, 4, {"PER", "LOC", "ORG", "MISC"}, source);
  EXPECT_EQ(pool.size(), 4u);
  EXPECT_EQ(pool.origin, EntityPool::Origin::ZERO_SHOT);
  EXPECT_NO_THROW(check_disjoint(pool, source));
  auto known = entity_surfaces(source);
  for (const auto& [type, surfaces] : pool.entries)
    for (const auto& s : surfaces) EXPECT_FALSE(known.contains(text::lower(s)));

  auto unfiltered = build_zero_shot_pool(gw, 10, {"PER", "LOC", "ORG", "MISC"}, {});
  EXPECT_EQ(unfiltered.size(), 6u);

  EntityPool bad;
  bad.origin = EntityPool::Origin::ZERO_SHOT;
  bad.add("LOC", "PARIS");
  EXPECT_THROW(check_disjoint(bad, source), ValidationError);

  auto garbage = scripted(nlohmann::json::array({rule("^Provide a list of ", "just prose here")}));
  EXPECT_THROW(build_zero_shot_pool(garbage, 3, {"PER"}, source), ParseError);
  EXPECT_THROW(build_zero_shot_pool(gw, 0, {"PER"}, source), ValidationError);
}

TEST(ZeroShotPool, EveryConstructedPoolIsDisjoint) {
  std::mt19937_64 rng(8);
  const std::vector<std::string> names{"ana", "ben", "cara", "dan", "eve", "fay", "gus", "hal", "ivy", "jon"};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Sample> source;
    std::string response;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (rng() % 2) source.push_back(testutil::ner_sample("s" + std::to_string(i), {names[i]}, {"B-PER"}));
      response += (rng() % 2 ? upper(names[i]) : names[i]) + "\tPER\n";
    }
    auto gw = scripted(nlohmann::json::array({rule("^Provide a list of ", response)}));
    auto pool = build_zero_shot_pool(gw, names.size(), {"PER"}, source);
    EXPECT_NO_THROW(check_disjoint(pool, source));
    EXPECT_EQ(pool.size(), names.size() - source.size());
  }
}

TEST(AugmentCorpus, DeterministicAndRoundTrips) {
  testutil::TempDir dir;
  std::vector<Sample> base{obama(), testutil::ner_sample("b", {"Apple", "hired", "Tim"}, {"B-ORG", "O", "B-PER"})};
  base[0].image_ref = "1";
  auto script = nlohmann::json::array({rule("^Transform the sentence in Twitter style without changing the meaning. (.*)$", "rt $1"),
                                       rule("^Whether", "yes"), rule("^What is a possible image", "a photo")});
  auto pool = build_in_domain_pool(base);
  AugmentConfig cfg;
  cfg.times = 2;
  auto run = [&] {
    auto gw = scripted(script);
    return augment_corpus(base, gw, &pool, cfg);
  };
  auto a = run(), b = run();
  ASSERT_EQ(a.samples.size(), b.samples.size());
  EXPECT_GT(a.stats.duplicates, 0u);
  write_augmented(a.samples, dir / "a.txt", dir / "a.prov.jsonl", Task::NER);
  write_augmented(b.samples, dir / "b.txt", dir / "b.prov.jsonl", Task::NER);
  EXPECT_EQ(testutil::read_file(dir / "a.txt"), testutil::read_file(dir / "b.txt"));
  EXPECT_EQ(testutil::read_file(dir / "a.prov.jsonl"), testutil::read_file(dir / "b.prov.jsonl"));
  auto loaded = load_augmented(dir / "a.txt", dir / "a.prov.jsonl", Task::NER);
  ASSERT_EQ(loaded.size(), a.samples.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].id, a.samples[i].sample.id);
    EXPECT_EQ(loaded[i].tokens, a.samples[i].sample.tokens);
    EXPECT_EQ(loaded[i].caption, a.samples[i].sample.caption);
  }
}
