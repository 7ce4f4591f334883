#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rlqg/toymodel.hpp"

namespace rlqg {

/// -log sigmoid(r_plus - r_minus), computed without overflow.
double rm_loss(double r_plus, double r_minus);
/// d rm_loss / d (r_plus - r_minus) = -sigmoid(r_minus - r_plus).
double rm_loss_margin_grad(double r_plus, double r_minus);

/// Policy backbone plus a scalar head reading the final decoder state after
/// teacher-forcing [BOS, q_1 .. q_T] on the encoded prompt.
struct RewardParams {
  Params backbone;
  Eigen::VectorXd head;  // H
  Eigen::VectorXd bias;  // 1

  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    self.backbone.for_each(f);
    f("head", self.head);
    f("bias", self.bias);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, f); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, f); }

  static RewardParams zeros(const ModelDims& dims);
  void add_scaled(const RewardParams& other, double k);
};

struct RewardModel {
  Vocab vocab;
  RewardParams params;

  /// Copies the policy backbone; the head starts at small random values
  /// and the bias at zero.
  static RewardModel from_policy(const Policy& policy, std::uint64_t seed);

  double score(std::string_view prompt, std::string_view question) const;
  double score_ids(std::span<const int> src, std::span<const int> question) const;

  json to_json(const json& extra = json::object()) const;
  static RewardModel from_json(const json& doc);
  void save(const std::filesystem::path& path, const json& extra = json::object()) const;
  static RewardModel load(const std::filesystem::path& path);
};

/// Scores continuations of one prompt with a shared encoder pass. When `g`
/// is given, accumulates the gradient of sum_i dscore[i] * r_i.
std::vector<double> reward_forward_backward(const RewardParams& p, std::span<const int> src,
                                            const std::vector<std::vector<int>>& questions,
                                            const std::vector<double>& dscore, RewardParams* g);

struct PreferenceText {
  std::string prompt;
  std::string chosen;
  std::string rejected;
};

struct RmTrainReport {
  std::vector<double> epoch_loss;      // mean pair loss, measured after each epoch
  std::vector<double> epoch_accuracy;  // fraction with r(chosen) > r(rejected)
  double initial_loss = 0.0;
  double initial_accuracy = 0.0;
};

/// Mean pair loss and its gradient over `pairs` (index list into `encoded`).
struct EncodedPreference {
  std::vector<int> src, chosen, rejected;
};
double rm_batch_loss(const RewardParams& p, const std::vector<EncodedPreference>& pairs,
                     RewardParams* g);

/// SGD on the mean pair loss with global-norm clipping. Throws
/// TrainingError on a non-finite loss.
RmTrainReport train_reward_model(RewardModel& rm, const std::vector<PreferenceText>& pairs,
                                 const TrainConfig& cfg);
double pairwise_accuracy(const RewardModel& rm, const std::vector<PreferenceText>& pairs);

enum class KlMode { monte_carlo, exact };

/// KL(policy || reference) of the continuation distributions, averaged over
/// prompts. Monte Carlo draws ancestral samples (temperature 1, no
/// truncation); exact enumerates every sequence up to `max_length` tokens.
double kl_estimate(const Params& policy, const Params& reference,
                   const std::vector<std::vector<int>>& prompts, int samples_per_prompt,
                   std::uint64_t seed, int max_length, KlMode mode);
double kl_exact(const Params& policy, const Params& reference, std::span<const int> src, int max_length);

struct PpoConfig {
  double kl_coef = 0.1;     // mu
  double clip = 0.2;        // epsilon
  int iterations = 40;
  int prompts_per_iteration = 32;
  int rollouts_per_prompt = 2;
  int ppo_epochs = 1;
  double learning_rate = 5e-2;
  double grad_clip = 1.0;
  double baseline_momentum = 0.9;
  double kl_ceiling = std::numeric_limits<double>::infinity();
  int max_length = 32;
  std::uint64_t seed = 42;

  void validate() const;
  json to_json() const;
  static PpoConfig from_json(const json& doc);
  /// Reference values mirroring the paper's RL fine-tuning table
  /// (lr 1e-5, 1 epoch, batch 8); for out-of-band runs.
  static PpoConfig paper_reference();
};

struct Rollout {
  std::size_t prompt = 0;            // index into the prompt list
  std::vector<int> target;           // emitted tokens (EOS included when finished)
  std::vector<double> old_logp;      // per token, behaviour policy
  std::vector<double> advantage;     // per token
};

/// Clipped surrogate  -(1/N) sum_t min(rho_t A_t, clip(rho_t, 1-eps, 1+eps) A_t)
/// over all rollout tokens (N of them). Accumulates its gradient into `g`
/// when given. `clip_fraction` receives the share of clipped tokens.
double ppo_surrogate(const Params& p, const std::vector<std::vector<int>>& prompts,
                     const std::vector<Rollout>& rollouts, double clip, Params* g,
                     double* clip_fraction = nullptr);

struct PpoIterationLog {
  int iter = 0;
  double mean_reward = 0.0;  // reward-model score of the rollouts
  double mean_kl = 0.0;      // sum over tokens of log pi - log pi_ref, averaged over rollouts
  double loss = 0.0;
  double clip_fraction = 0.0;
  json to_json() const;
};

struct PpoReport {
  std::vector<PpoIterationLog> log;
  bool early_stopped = false;
  std::string status = "completed";
};

using RewardFn = std::function<double(std::span<const int> src, std::span<const int> question)>;

/// Refines `policy` (initialized from the SFT parameters `reference`) with
/// rollouts sampled fresh each iteration. Sequence reward r(p, q) minus the
/// per-token penalty mu * (log pi - log pi_ref) gives reward-to-go returns;
/// advantages subtract a running-mean baseline seeded by the first batch.
PpoReport ppo_refine(Policy& policy, const Params& reference, const RewardFn& reward,
                     const std::vector<std::string>& prompts, const PpoConfig& cfg,
                     const std::function<void(const PpoIterationLog&)>& on_iteration = {});
PpoReport ppo_refine(Policy& policy, const Params& reference, const RewardModel& rm,
                     const std::vector<std::string>& prompts, const PpoConfig& cfg,
                     const std::function<void(const PpoIterationLog&)>& on_iteration = {});

/// Advantage computation used by ppo_refine, exposed for testing.
/// `token_kl[i][t]` = log pi - log pi_ref at token t of rollout i. Updates
/// `baseline` (NaN = uninitialized) and returns per-token advantages.
std::vector<std::vector<double>> compute_advantages(const std::vector<double>& rewards,
                                                    const std::vector<std::vector<double>>& token_kl,
                                                    double kl_coef, double momentum, double& baseline);

}  // namespace rlqg
