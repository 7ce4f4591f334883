#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "rlqg/toymodel.hpp"
#include "support.hpp"

using namespace rlqg;

TEST(ModelTokens, SplitPunctuationAndRejoin) {
  const auto toks = model_tokenize("Who is the attacker?");
  EXPECT_EQ(toks, (std::vector<std::string>{"Who", "is", "the", "attacker", "?"}));
  const Vocab v = Vocab::build({"Who is the attacker?"});
  EXPECT_EQ(v.token(kPad), "<pad>");
  EXPECT_EQ(v.id("zebra"), kUnk);
  const auto ids = v.encode("Who is the attacker?");
  EXPECT_EQ(v.decode(ids), "Who is the attacker?");
}

TEST(Vocab, DecodeStopsAtEos) {
  const Vocab v = test::letter_vocab(3);
  const std::vector<int> ids = {kBos, 4, kPad, 5, kEos, 6};
  EXPECT_EQ(v.decode(ids), "a b");
}

TEST(GradCheck, CrossEntropyMatchesFiniteDifferences) {
  const Policy p = test::tiny_policy(4, 5, 6, 1, 3.0);
  ASSERT_LE(p.params.parameter_count(), 5000u);
  const std::vector<std::pair<std::vector<int>, std::vector<int>>> batch = {
      {{4, 5, 6}, {5, 7, kEos}}, {{7, 4}, {4, 4, 6, kEos}}, {{6}, {kEos}}};
  const auto r = grad_check(p.params, batch, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "]";
  EXPECT_EQ(r.checked, p.params.parameter_count());
}

TEST(Decoding, ProbabilitiesSumToOne) {
  const Policy p = test::tiny_policy(2, 3, 4, 9, 4.0);
  const std::vector<int> src = {4, 5};
  double total = 0.0;
  test::enumerate_sequences(p.vocab.size(), 4, [&](const std::vector<int>& seq) {
    total += std::exp(sequence_log_prob<double>(p.params, src, seq));
  });
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Decoding, BeamMatchesExhaustiveTopK) {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const Policy p = test::tiny_policy(1, 3, 4, seed, 4.0);  // vocab of 5
    const std::vector<int> src = {4, 3};
    std::vector<std::pair<double, std::vector<int>>> all;
    test::enumerate_sequences(p.vocab.size(), 4, [&](const std::vector<int>& seq) {
      if (seq.back() == kEos) all.emplace_back(sequence_log_prob<double>(p.params, src, seq), seq);
    });
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    DecodeConfig cfg;
    cfg.beam_size = 8;
    cfg.num_return = 3;
    cfg.max_length = 4;
    const auto beam = beam_search_ids(p.params, src, cfg);
    ASSERT_EQ(beam.hypotheses.size(), 3u);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(beam.hypotheses[k].target(), all[k].second) << "seed " << seed << " rank " << k;
      EXPECT_NEAR(beam.hypotheses[k].log_prob, all[k].first, 1e-12);
    }
  }
}

TEST(Decoding, GreedyPicksArgmaxAndRespectsMaxLength) {
  const Policy p = test::tiny_policy(3, 4, 5, 2, 3.0);
  const std::vector<int> src = {4};
  const Generation g = greedy_decode(p.params, src, 3);
  EXPECT_LE(g.target().size(), 3u);
  EXPECT_NEAR(g.log_prob, sequence_log_prob<double>(p.params, src, g.target()), 1e-12);
  for (int t : g.ids) {
    EXPECT_NE(t, kPad);
    EXPECT_NE(t, kBos);
  }
}

TEST(Decoding, SamplingIsSeedDeterministic) {
  const Policy p = test::tiny_policy(6, 4, 5, 3);
  DecodeConfig cfg;
  cfg.seed = 17;
  cfg.max_length = 10;
  const std::string a = sample(p, "a b c", cfg);
  EXPECT_EQ(a, sample(p, "a b c", cfg));
  bool differs = false;
  for (std::uint64_t s = 18; s < 40 && !differs; ++s) {
    cfg.seed = s;
    differs = sample(p, "a b c", cfg) != a;
  }
  EXPECT_TRUE(differs);
}

TEST(Decoding, TinyTopPIsGreedy) {
  const Policy p = test::tiny_policy(4, 4, 5, 8, 3.0);
  DecodeConfig cfg;
  cfg.top_p = 1e-9;
  cfg.max_length = 6;
  std::mt19937_64 rng(1);
  const std::vector<int> src = {5, 6};
  EXPECT_EQ(sample_ids(p.params, src, cfg, rng).target(), greedy_decode(p.params, src, 6).target());
}

TEST(Checkpoint, RoundTripsExactly) {
  const Policy p = test::tiny_policy(5, 4, 3, 12);
  const Policy q = Policy::from_json(p.to_json());
  EXPECT_TRUE(q.params == p.params);
  EXPECT_EQ(q.vocab, p.vocab);
  const auto dir = test::temp_dir("ckpt");
  p.save(dir / "p.json", {{"config_hash", "h"}});
  EXPECT_TRUE(Policy::load(dir / "p.json").params == p.params);

  json broken = p.to_json();
  broken["dims"]["hidden"] = 7;
  EXPECT_THROW(Policy::from_json(broken), Error);
}

TEST(Sft, InitialLossNearUniformAndDecreases) {
  const std::vector<std::pair<std::string, std::string>> pairs = {
      {"a b", "c d"}, {"b a", "d c"}, {"c c", "a"}, {"d a", "b b c"}};
  Policy p = Policy::create(test::letter_vocab(4), 8, 8, 3);
  const double initial = mean_token_loss(p, pairs);
  EXPECT_NEAR(initial, std::log(p.vocab.size() - 2.0), 0.05);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.batch_size = 2;
  const SftReport r = sft_train(p, pairs, cfg);
  EXPECT_NEAR(r.initial_loss, initial, 1e-12);
  EXPECT_LT(r.epoch_loss.back(), 0.5 * initial);
  EXPECT_LT(mean_token_loss(p, pairs), initial);
}

TEST(Sft, RejectsBadConfig) {
  Policy p = Policy::create(test::letter_vocab(2), 4, 4, 3);
  TrainConfig cfg;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(sft_train(p, {{"a", "b"}}, cfg), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = 1e300;
  cfg.grad_clip = 0.0;
  EXPECT_THROW(sft_train(p, {{"a", "b"}}, cfg), TrainingError);
}
