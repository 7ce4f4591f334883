#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rlqg/rlhf.hpp"
#include "support.hpp"

using namespace rlqg;

namespace {

std::vector<EncodedPreference> random_preferences(int words, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto seq = [&](std::size_t len) {
    std::vector<int> s(len);
    for (auto& t : s) t = 4 + static_cast<int>(rng() % static_cast<unsigned>(words));
    return s;
  };
  std::vector<EncodedPreference> out;
  for (int i = 0; i < n; ++i) out.push_back({seq(1 + rng() % 3), seq(1 + rng() % 3), seq(1 + rng() % 3)});
  return out;
}

// Rollouts whose ratios sit on both sides of the clip range, away from the kinks.
std::vector<Rollout> perturbed_rollouts(const Params& p, const std::vector<std::vector<int>>& prompts,
                                        double clip, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Rollout> out;
  DecodeConfig d;
  d.temperature = 1.0;
  d.top_p = 1.0;
  d.max_length = 4;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      Rollout r;
      r.prompt = i;
      r.target = sample_ids(p, prompts[i], d, rng).target();
      std::vector<std::vector<double>> logp;
      prompt_group_loss<double>(p, prompts[i], {r.target}, {std::vector<double>(r.target.size(), 0.0)}, nullptr,
                                &logp);
      for (std::size_t t = 0; t < r.target.size(); ++t) {
        double shift = 0.0;
        do shift = (uniform01(rng) - 0.5) * 0.8;
        while (std::abs(std::exp(-shift) - (1.0 + clip)) < 1e-3 || std::abs(std::exp(-shift) - (1.0 - clip)) < 1e-3);
        r.old_logp.push_back(logp[0][t] + shift);
        r.advantage.push_back(uniform01(rng) - 0.5);
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<std::string> letter_prompts() { return {"a b", "b c", "c a", "a a c", "b"}; }

// Reward for emitting the token 'a' early.
double likes_a(std::span<const int>, std::span<const int> q) {
  double r = 0.0;
  for (std::size_t t = 0; t < q.size(); ++t)
    if (q[t] == 4) r += 1.0 / static_cast<double>(t + 1);
  return r;
}

}  // namespace

TEST(RmLoss, Values) {
  EXPECT_NEAR(rm_loss(0.0, 0.0), std::log(2.0), 1e-9);
  EXPECT_NEAR(rm_loss(std::log(3.0), 0.0), std::log(4.0 / 3.0), 1e-9);
  EXPECT_NEAR(rm_loss(1000.0, 0.0), 0.0, 1e-12);
  EXPECT_NEAR(rm_loss(0.0, 1000.0), 1000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(rm_loss(-1e300, 1e300)));
}

TEST(RmLoss, FlipAntisymmetryAndShiftInvariance) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = (uniform01(rng) - 0.5) * 40.0;
    const double b = (uniform01(rng) - 0.5) * 40.0;
    const double c = (uniform01(rng) - 0.5) * 100.0;
    EXPECT_NEAR(rm_loss(a, b) - rm_loss(b, a), b - a, 1e-9);
    EXPECT_NEAR(rm_loss(a + c, b + c), rm_loss(a, b), 1e-9);
    EXPECT_NEAR(rm_loss_margin_grad(a, b), -1.0 / (1.0 + std::exp(a - b)), 1e-12);
  }
}

TEST(RewardModel, GradientMatchesFiniteDifferences) {
  const Policy pol = test::tiny_policy(4, 4, 5, 3, 2.0);
  const RewardModel rm = RewardModel::from_policy(pol, 11);
  const auto pairs = random_preferences(4, 4, 2);
  RewardParams g = RewardParams::zeros(pol.params.dims);
  rm_batch_loss(rm.params, pairs, &g);
  const auto r = finite_difference_check(
      rm.params, g, [&](const RewardParams& q) { return rm_batch_loss(q, pairs, nullptr); }, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "]";
}

TEST(RewardModel, SinglePairStepLowersLossAndFlipTrainsBack) {
  Policy pol = test::tiny_policy(4, 6, 6, 3);
  RewardModel rm = RewardModel::from_policy(pol, 1);
  const std::vector<PreferenceText> pair = {{"a b", "c", "d"}};
  TrainConfig cfg = TrainConfig::preset("toy-rm");
  cfg.epochs = 1;
  cfg.learning_rate = 0.05;
  const auto r = train_reward_model(rm, pair, cfg);
  EXPECT_LT(r.epoch_loss[0], r.initial_loss);

  cfg.epochs = 200;
  cfg.learning_rate = 0.2;
  train_reward_model(rm, pair, cfg);
  EXPECT_GT(rm.score("a b", "c"), rm.score("a b", "d"));
  train_reward_model(rm, {{"a b", "d", "c"}}, cfg);
  EXPECT_GT(rm.score("a b", "d"), rm.score("a b", "c"));
}

TEST(RewardModel, CheckpointRoundTrip) {
  const RewardModel rm = RewardModel::from_policy(test::tiny_policy(3, 3, 4, 1), 2);
  const RewardModel back = RewardModel::from_json(rm.to_json());
  EXPECT_EQ(back.score("a", "b c"), rm.score("a", "b c"));
  EXPECT_THROW(RewardModel::from_json(test::tiny_policy(3, 3, 4, 1).to_json()), Error);
}

TEST(Kl, ZeroForIdenticalAndMatchesEnumeration) {
  const Policy p = test::tiny_policy(2, 3, 4, 1, 3.0);
  const Policy q = test::tiny_policy(2, 3, 4, 2, 3.0);
  const std::vector<int> src = {4, 5, 4};
  EXPECT_EQ(kl_exact(p.params, p.params, src, 4), 0.0);

  double closed = 0.0;
  test::enumerate_sequences(p.vocab.size(), 4, [&](const std::vector<int>& s) {
    const double lp = sequence_log_prob<double>(p.params, src, s);
    closed += std::exp(lp) * (lp - sequence_log_prob<double>(q.params, src, s));
  });
  EXPECT_NEAR(kl_exact(p.params, q.params, src, 4), closed, 1e-9);
  EXPECT_GT(closed, 0.0);
}

TEST(Kl, NonNegativeAndMonteCarloAgrees) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Policy p = test::tiny_policy(2, 3, 3, 100 + s, 3.0);
    const Policy q = test::tiny_policy(2, 3, 3, 200 + s, 3.0);
    EXPECT_GE(kl_exact(p.params, q.params, std::vector<int>{4}, 3), 0.0);
  }
  const Policy p = test::tiny_policy(2, 3, 3, 7, 2.0);
  const Policy q = test::tiny_policy(2, 3, 3, 8, 2.0);
  const std::vector<std::vector<int>> prompts = {{4}, {5, 4}};
  const double exact = kl_estimate(p.params, q.params, prompts, 0, 0, 3, KlMode::exact);
  const double mc = kl_estimate(p.params, q.params, prompts, 20000, 3, 3, KlMode::monte_carlo);
  EXPECT_NEAR(mc, exact, 0.05 * std::max(exact, 0.1));
}

TEST(Ppo, SurrogateGradientMatchesFiniteDifferences) {
  const Policy pol = test::tiny_policy(3, 4, 5, 4, 2.0);
  const std::vector<std::vector<int>> prompts = {{4, 5}, {6}, {5, 5, 4}};
  const auto rollouts = perturbed_rollouts(pol.params, prompts, 0.2, 9);
  Params g = Params::zeros(pol.params.dims);
  double clipped = 0.0;
  ppo_surrogate(pol.params, prompts, rollouts, 0.2, &g, &clipped);
  EXPECT_GT(clipped, 0.0);
  EXPECT_LT(clipped, 1.0);
  const auto r = finite_difference_check(
      pol.params, g, [&](const Params& q) { return ppo_surrogate(q, prompts, rollouts, 0.2, nullptr); }, 1e-5);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_tensor << "[" << r.worst_index << "]";
}

TEST(Ppo, AdvantagesIgnoreRewardShift) {
  const std::vector<double> rewards = {0.2, 0.9, -0.4};
  const std::vector<std::vector<double>> kl = {{0.1, 0.0}, {0.3}, {-0.1, 0.2, 0.05}};
  std::vector<double> shifted = rewards;
  for (auto& r : shifted) r += 7.5;
  double b1 = std::nan(""), b2 = std::nan("");
  const auto a1 = compute_advantages(rewards, kl, 0.1, 0.9, b1);
  const auto a2 = compute_advantages(shifted, kl, 0.1, 0.9, b2);
  for (std::size_t i = 0; i < a1.size(); ++i)
    for (std::size_t t = 0; t < a1[i].size(); ++t) EXPECT_NEAR(a1[i][t], a2[i][t], 1e-12);
  // Reward-to-go: the first token of rollout 0 carries both penalties.
  EXPECT_NEAR(a1[0][0] - a1[0][1], -0.1 * 0.1, 1e-12);
  EXPECT_NEAR(b2 - b1, 7.5, 1e-12);
}

TEST(Ppo, ZeroIterationsIsNoOp) {
  Policy p = test::tiny_policy(3, 4, 4, 1);
  const Params before = p.params;
  PpoConfig cfg;
  cfg.iterations = 0;
  const auto rep = ppo_refine(p, before, likes_a, letter_prompts(), cfg);
  EXPECT_TRUE(p.params == before);
  EXPECT_TRUE(rep.log.empty());
}

TEST(Ppo, DeterministicAndImprovesReward) {
  const Policy start = test::tiny_policy(3, 6, 8, 5);
  PpoConfig cfg;
  cfg.iterations = 60;
  cfg.prompts_per_iteration = 5;
  cfg.rollouts_per_prompt = 4;
  cfg.kl_coef = 0.01;
  cfg.learning_rate = 0.2;
  cfg.max_length = 6;
  Policy a = start, b = start;
  const auto ra = ppo_refine(a, start.params, likes_a, letter_prompts(), cfg);
  ppo_refine(b, start.params, likes_a, letter_prompts(), cfg);
  EXPECT_TRUE(a.params == b.params);
  ASSERT_EQ(ra.log.size(), 60u);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += ra.log[i].mean_reward;
    late += ra.log[ra.log.size() - 1 - i].mean_reward;
  }
  EXPECT_GT(late, early);
  EXPECT_EQ(ra.status, "completed");
}

TEST(Ppo, KlCeilingStopsEarly) {
  Policy p = test::tiny_policy(3, 6, 8, 5);
  const Params ref = p.params;
  PpoConfig cfg;
  cfg.iterations = 200;
  cfg.prompts_per_iteration = 5;
  cfg.kl_coef = 0.0;
  cfg.learning_rate = 0.5;
  cfg.max_length = 6;
  cfg.kl_ceiling = 0.05;
  const auto rep = ppo_refine(p, ref, likes_a, letter_prompts(), cfg);
  EXPECT_TRUE(rep.early_stopped);
  EXPECT_LT(rep.log.size(), 200u);
  EXPECT_GT(rep.log.back().mean_kl, 0.05);
  EXPECT_NE(rep.status.find("ceiling"), std::string::npos);
}

TEST(Ppo, RejectsMismatchedInputs) {
  Policy p = test::tiny_policy(3, 4, 4, 1);
  const Policy other = test::tiny_policy(3, 4, 5, 1);
  PpoConfig cfg;
  cfg.iterations = 1;
  EXPECT_THROW(ppo_refine(p, other.params, likes_a, letter_prompts(), cfg), TrainingError);
  EXPECT_THROW(ppo_refine(p, p.params, likes_a, {}, cfg), TrainingError);
  cfg.clip = 1.5;
  EXPECT_THROW(ppo_refine(p, p.params, likes_a, letter_prompts(), cfg), ConfigError);
  const RewardModel rm = RewardModel::from_policy(test::tiny_policy(4, 4, 4, 1), 1);
  cfg = PpoConfig{};
  EXPECT_THROW(ppo_refine(p, p.params, rm, letter_prompts(), cfg), TrainingError);
}

TEST(Ppo, ConfigJsonRoundTrip) {
  PpoConfig c;
  c.kl_ceiling = 2.5;
  EXPECT_EQ(PpoConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_TRUE(PpoConfig{}.to_json()["kl_ceiling"].is_null());
  EXPECT_TRUE(std::isinf(PpoConfig::from_json(PpoConfig{}.to_json()).kl_ceiling));
}
