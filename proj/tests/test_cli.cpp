#include <gtest/gtest.h>

#include <sstream>

#include "cotpd/cli/cli.hpp"
#include "cotpd/synthetic.hpp"
#include "test_util.hpp"

using namespace cotpd;
using testutil::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
  nlohmann::json summary() const { return nlohmann::json::parse(out.substr(0, out.find('\n'))); }
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cotpd");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

/// A small benchmark plus a config pointing at it.
std::string make_workspace(const TempDir& dir) {
  synthetic::Options opt;
  opt.samples = 60;
  synthetic::write_benchmark(dir / "data", opt, 20);
  nlohmann::json cfg{
      {"task", "ner"},
      {"work_dir", "run"},
      {"data", {{"train", "data/train.txt"}, {"dev", "data/dev.txt"}, {"test", "data/test.txt"},
                {"target", "data/target.txt"}}},
      {"llm", "mock:data/mock_llm.json"},
      {"caption", "file:data/captions.tsv"},
      {"augment", {{"zero_shot_count", 8}}},
      {"train",
       {{"epochs", 2},
        {"learning_rate", 0.003},
        {"model", {{"d", 8}, {"n_max", 12}, {"extra_tokens", 24}, {"prompt_length", 2}, {"layers", 1},
                   {"heads", 2}, {"ffn", 16}}}}}};
  testutil::write_file(dir / "config.json", cfg.dump(2));
  return (dir / "config.json").string();
}

}  // namespace

TEST(Cli, HelpMatchesGolden) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, testutil::read_file(std::string(COTPD_SOURCE_DIR) + "/tests/golden/help.txt"));
  EXPECT_EQ(r.out, cli::help_text());
}

TEST(Cli, UsageErrorsExitOne) {
  auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("error:"), std::string::npos);
  EXPECT_NE(unknown.err.find("Subcommands:"), std::string::npos);
  EXPECT_EQ(run({"train", "--no-such-flag"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"train", "--mode", "sideways"}).code, 1);
  TempDir dir;
  EXPECT_EQ(run({"train", "-c", (dir / "missing.json").string()}).code, 1);
}

TEST(Cli, SetOverridesParse) {
  nlohmann::json j = nlohmann::json::object();
  cli::apply_override(j, "train.epochs=3");
  cli::apply_override(j, "train.model.variant=mv");
  cli::apply_override(j, "augment.use=true");
  EXPECT_EQ(j["train"]["epochs"], 3);
  EXPECT_EQ(j["train"]["model"]["variant"], "mv");
  EXPECT_EQ(j["augment"]["use"], true);
  EXPECT_THROW(cli::apply_override(j, "novalue"), cli::UsageError);
  EXPECT_EQ(cli::parse_size_list("50, 100,200", "--sizes"), (std::vector<std::size_t>{50, 100, 200}));
  EXPECT_THROW(cli::parse_size_list("5,x", "--sizes"), cli::UsageError);
}

TEST(Cli, PipelineEndToEnd) {
  TempDir dir;
  auto cfg = make_workspace(dir);

  auto syn = run({"synthesize", "-c", cfg});
  ASSERT_EQ(syn.code, 0) << syn.err;
  EXPECT_GT(syn.summary()["provider_calls"].get<int>(), 0);
  EXPECT_EQ(syn.summary()["samples"], 60);
  auto again = run({"synthesize", "-c", cfg});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(again.summary()["provider_calls"], 0);
  EXPECT_EQ(again.summary()["synthesized"], 0);

  auto aug = run({"augment", "-c", cfg});
  ASSERT_EQ(aug.code, 0) << aug.err;
  EXPECT_GT(aug.summary()["accepted"].get<int>(), 0);

  auto tr = run({"train", "-c", cfg, "--set", "augment.use=true"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "model.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "report.json"));

  auto ev = run({"eval", "-c", cfg, "--mode", "prompt"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.summary()["knowledge_reads"], 0);
  EXPECT_EQ(ev.summary()["provider_calls"], 0);

  auto all = run({"eval", "-c", cfg, "--split", "dev"});
  ASSERT_EQ(all.code, 0) << all.err;
  EXPECT_TRUE(all.summary()["f1"].contains("knowledge"));
  EXPECT_TRUE(all.summary()["f1"].contains("text_only"));

  testutil::write_file(dir / "input.txt", "jordan said today\n\nthe paris visited new\n");
  auto pr = run({"predict", "-c", cfg, "--input", (dir / "input.txt").string()});
  ASSERT_EQ(pr.code, 0) << pr.err;
  EXPECT_EQ(pr.summary()["provider_calls"], 0);
  EXPECT_EQ(pr.summary()["sentences"], 2);
  EXPECT_EQ(pr.summary()["mode"], "prompt");
  EXPECT_NE(pr.out.find("jordan/"), std::string::npos);
}

TEST(Cli, ExperimentVerbs) {
  TempDir dir;
  auto cfg = make_workspace(dir);
  ASSERT_EQ(run({"synthesize", "-c", cfg}).code, 0);

  auto var = run({"train", "-c", cfg, "--variant", "cpd,mv", "--set", "train.epochs=1"});
  ASSERT_EQ(var.code, 0) << var.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "run" / "variants.json"));

  auto cd = run({"cross-domain", "-c", cfg, "--set", "train.epochs=1"});
  ASSERT_EQ(cd.code, 0) << cd.err;
  EXPECT_EQ(cd.summary()["rows"].size(), 3u);

  auto curve = run({"aug-curve", "-c", cfg, "--sizes", "10,20", "--times", "0,1", "--set", "train.epochs=1"});
  ASSERT_EQ(curve.code, 0) << curve.err;
  auto csv = testutil::read_file(dir / "run" / "curve.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);

  auto too_big = run({"aug-curve", "-c", cfg, "--sizes", "1000", "--times", "0"});
  EXPECT_EQ(too_big.code, 2);
  EXPECT_NE(too_big.err.find("exceeds"), std::string::npos);
}

TEST(Cli, RuntimeFailureExitsTwo) {
  TempDir dir;
  auto cfg = make_workspace(dir);
  auto r = run({"eval", "-c", cfg, "--model", (dir / "nope.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error:"), std::string::npos);
}
