#include <gtest/gtest.h>

#include <random>

#include "rlqg/preference.hpp"
#include "support.hpp"

using namespace rlqg;

namespace {

// Straight from the definition: first index holding the max and the min.
std::optional<std::pair<std::size_t, std::size_t>> gate_oracle(const std::vector<double>& s, double alpha,
                                                               double beta) {
  if (s.empty()) return std::nullopt;
  const double hi = *std::max_element(s.begin(), s.end());
  const double lo = *std::min_element(s.begin(), s.end());
  if (!(hi > alpha && hi - lo > beta)) return std::nullopt;
  const auto c = static_cast<std::size_t>(std::find(s.begin(), s.end(), hi) - s.begin());
  const auto r = static_cast<std::size_t>(std::find(s.begin(), s.end(), lo) - s.begin());
  return std::make_pair(c, r);
}

EventInstance table_instance(const std::string& id, std::vector<std::string> golds) {
  EventInstance i;
  i.id = id;
  i.context = "Marines attacked insurgents in Falluja on Monday.";
  i.trigger = {"attacked", 8, 16};
  i.event_type = "Conflict.Attack";
  i.role = "attacker";
  i.gold_answers = std::move(golds);
  return i;
}

}  // namespace

TEST(Score, CombinedWeights) {
  const SelectionConfig cfg;
  EXPECT_DOUBLE_EQ(combined_score(0.8, 1.0, cfg), 0.94);
  EXPECT_EQ(combined_score(0.0, 0.0, cfg), 0.0);
  EXPECT_DOUBLE_EQ(combined_score(1.0, 1.0, cfg), 1.0);
}

TEST(Gate, WorkedCases) {
  const SelectionConfig cfg;
  const auto s = select_pair(std::vector<double>{0.94, 0.10}, cfg);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->chosen, 0u);
  EXPECT_EQ(s->rejected, 1u);
  EXPECT_DOUBLE_EQ(s->gap, 0.84);
  EXPECT_FALSE(select_pair(std::vector<double>{0.60, 0.05}, cfg).has_value());
  EXPECT_FALSE(select_pair(std::vector<double>{0.90, 0.70}, cfg).has_value());
  EXPECT_FALSE(select_pair(std::vector<double>{}, cfg).has_value());
  EXPECT_FALSE(select_pair(std::vector<double>{0.9}, cfg).has_value());
}

TEST(Gate, ThresholdsAreStrict) {
  SelectionConfig cfg;
  cfg.alpha = 0.5;
  cfg.beta = 0.25;
  EXPECT_FALSE(select_pair(std::vector<double>{0.5, 0.0}, cfg).has_value());     // max == alpha
  EXPECT_FALSE(select_pair(std::vector<double>{0.75, 0.5}, cfg).has_value());    // gap == beta
  EXPECT_TRUE(select_pair(std::vector<double>{0.75, 0.4375}, cfg).has_value());
}

TEST(Gate, TiesGoToLowestIndex) {
  const auto s = select_pair(std::vector<double>{0.1, 0.9, 0.1, 0.9}, SelectionConfig{});
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->chosen, 1u);
  EXPECT_EQ(s->rejected, 0u);
}

TEST(Gate, AgreesWithOracleOnRandomSets) {
  std::mt19937_64 rng(99);
  const SelectionConfig cfg;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> s(1 + rng() % 6);
    // Coarse grid so ties and threshold hits actually occur.
    for (auto& v : s) v = static_cast<double>(rng() % 21) / 20.0;
    const auto got = select_pair(s, cfg);
    const auto want = gate_oracle(s, cfg.alpha, cfg.beta);
    ASSERT_EQ(got.has_value(), want.has_value());
    if (got) {
      EXPECT_EQ(got->chosen, want->first);
      EXPECT_EQ(got->rejected, want->second);
    }
  }
}

TEST(Config, ValidatesRanges) {
  SelectionConfig c;
  c.alpha = 2.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(SelectionConfig::from_json({{"beta", -0.1}}), ConfigError);
  EXPECT_EQ(SelectionConfig::from_json(SelectionConfig{}.to_json()).to_json(), SelectionConfig{}.to_json());
}

TEST(Dataset, BuildsGatedPairsFromCandidates) {
  const auto inst = table_instance("i1", {"Marines"});
  const std::string ctx = inst.context;
  // QA answers by question; the inverse recoverer echoes the context for the good question.
  ScriptedTableBackend qa({{qa_user_turn("Who attacked?", ctx), "[ANS] Marines [/ANS]"},
                           {qa_user_turn("Where?", ctx), "[ANS] Falluja [/ANS]"},
                           {qa_user_turn("Who attacked whom?", ctx), "[ANS] Marines [/ANS]"}});
  ScriptedTableBackend ip({{build_inverse_prompt("attacked", "Who attacked?").text, ctx},
                           {build_inverse_prompt("attacked", "Where?").text, "Unrelated text."},
                           {build_inverse_prompt("attacked", "Who attacked whom?").text, ctx}});
  const auto embedder = fit_default_embedder({ctx, "Unrelated text."});
  const ScoringPipeline pipe{&ip, &qa, &embedder, &inverse_fewshot_bank(), &qa_fewshot_bank(), 0, 0};

  const auto ds = build_preference_dataset({inst, table_instance("i2", {"Marines"})},
                                           {{"", "Where?", "Who attacked?", "Who attacked whom?"}, {"Unknown?"}},
                                           pipe, SelectionConfig{});
  ASSERT_EQ(ds.pairs.size(), 1u);
  const auto& p = ds.pairs[0];
  EXPECT_EQ(p.prompt, build_qg_prompt(inst).text);
  EXPECT_EQ(p.chosen, "Who attacked?");
  EXPECT_EQ(p.rejected, "Where?");
  EXPECT_EQ(p.chosen_index, 2u);
  EXPECT_EQ(p.rejected_index, 1u);
  EXPECT_DOUBLE_EQ(p.chosen_scores.s, 1.0);
  EXPECT_EQ(p.rejected_scores.cor, 0.0);
  EXPECT_EQ(ds.tally.instances, 2u);
  EXPECT_EQ(ds.tally.failures, 1u);
  EXPECT_NE(ds.tally.failure_messages[0].find("i2"), std::string::npos);
}

TEST(Dataset, JsonlRoundTrip) {
  PreferenceDataset ds;
  ds.pairs.push_back({"role: a trigger: b context: c", "Who?", "What?", 0.75, "x", 0, 3, {1, 1, 1}, {0, 0.5, 0.35}});
  ds.pairs.push_back({"role: d trigger: e context: f", "Where?", "Why?", 0.6, "y", 1, 2, {0.8, 1, 0.94}, {0, 0.2, 0.14}});
  const auto dir = test::temp_dir("prefs");
  save_preference_dataset(ds, dir / "p.jsonl", {{"config_hash", "abc"}});
  const auto back = load_preference_dataset(dir / "p.jsonl");
  EXPECT_EQ(back.pairs, ds.pairs);

  write_text_file(dir / "bad.jsonl", read_text_file(dir / "p.jsonl") +
                                         R"({"prompt": "p", "chosen": "q", "rejected": "q", "gap": 0.9,)"
                                         R"( "instance_id": "z", "scores": {"chosen": {"semsim": 1, "cor": 1, "s": 1},)"
                                         R"( "rejected": {"semsim": 0, "cor": 0, "s": 0}}})"
                                         "\n");
  try {
    load_preference_dataset(dir / "bad.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
}
