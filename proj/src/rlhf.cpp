#include "rlqg/rlhf.hpp"

#include <numeric>

namespace rlqg {

double rm_loss(double r_plus, double r_minus) {
  // softplus(-m) = max(-m, 0) + log1p(exp(-|m|))
  const double m = r_plus - r_minus;
  return std::max(-m, 0.0) + std::log1p(std::exp(-std::abs(m)));
}

double rm_loss_margin_grad(double r_plus, double r_minus) {
  const double m = r_plus - r_minus;
  return -detail::sigmoid(-m);
}

RewardParams RewardParams::zeros(const ModelDims& dims) {
  return {Params::zeros(dims), Eigen::VectorXd::Zero(dims.hidden), Eigen::VectorXd::Zero(1)};
}

void RewardParams::add_scaled(const RewardParams& other, double k) {
  backbone.add_scaled(other.backbone, k);
  head += k * other.head;
  bias += k * other.bias;
}

RewardModel RewardModel::from_policy(const Policy& policy, std::uint64_t seed) {
  RewardModel rm{policy.vocab, RewardParams::zeros(policy.params.dims)};
  rm.params.backbone = policy.params;
  std::mt19937_64 engine(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(policy.params.dims.hidden));
  for (Eigen::Index i = 0; i < rm.params.head.size(); ++i)
    rm.params.head[i] = (2.0 * uniform01(engine) - 1.0) * scale;
  return rm;
}

std::vector<double> reward_forward_backward(const RewardParams& p, std::span<const int> src,
                                            const std::vector<std::vector<int>>& questions,
                                            const std::vector<double>& dscore, RewardParams* g) {
  const Params& b = p.backbone;
  const EncoderTrace<double> enc = encode(b, src);
  Eigen::VectorXd dcontext = Eigen::VectorXd::Zero(b.dims.hidden);
  std::vector<double> scores;
  scores.reserve(questions.size());
  for (std::size_t i = 0; i < questions.size(); ++i) {
    std::vector<int> inputs{kBos};
    inputs.insert(inputs.end(), questions[i].begin(), questions[i].end());
    const DecoderTrace<double> trace = decode_trace(b, enc.context, inputs);
    const Eigen::VectorXd& last = trace.steps.back().h;
    scores.push_back(p.head.dot(last) + p.bias[0]);
    if (!g || dscore[i] == 0.0) continue;
    g->head += dscore[i] * last;
    g->bias[0] += dscore[i];
    std::vector<Eigen::VectorXd> dstates(trace.steps.size(), Eigen::VectorXd::Zero(b.dims.hidden));
    dstates.back() = dscore[i] * p.head;
    dcontext += backward_decoder(b, trace, dstates, g->backbone);
  }
  if (g) backward_encoder(b, src, enc, dcontext, g->backbone);
  return scores;
}

double RewardModel::score_ids(std::span<const int> src, std::span<const int> question) const {
  return reward_forward_backward(params, src, {std::vector<int>(question.begin(), question.end())}, {0.0},
                                 nullptr)[0];
}

double RewardModel::score(std::string_view prompt, std::string_view question) const {
  return score_ids(vocab.encode(prompt), vocab.encode(question));
}

json RewardModel::to_json(const json& extra) const {
  json j = extra;
  j["format"] = "rlqg-reward-model";
  j["version"] = 1;
  const ModelDims& d = params.backbone.dims;
  j["dims"] = {{"vocab", d.vocab}, {"embed", d.embed}, {"hidden", d.hidden}};
  j["vocab"] = vocab.to_json();
  j["params"] = params_to_json(params.backbone);
  j["head"] = std::vector<double>(params.head.data(), params.head.data() + params.head.size());
  j["bias"] = params.bias[0];
  return j;
}

RewardModel RewardModel::from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "rlqg-reward-model") throw Error("not a reward-model checkpoint");
    if (doc.value("version", 0) != 1) throw Error("unsupported checkpoint version");
    const ModelDims dims{doc.at("dims").at("vocab").get<int>(), doc.at("dims").at("embed").get<int>(),
                         doc.at("dims").at("hidden").get<int>()};
    RewardModel rm{Vocab::from_json(doc.at("vocab")), RewardParams::zeros(dims)};
    if (rm.vocab.size() != dims.vocab) throw Error("checkpoint vocab size differs from its dims");
    rm.params.backbone = params_from_json(doc.at("params"), dims);
    const auto head = doc.at("head").get<std::vector<double>>();
    if (static_cast<int>(head.size()) != dims.hidden) throw Error("reward head has the wrong size");
    rm.params.head = Eigen::Map<const Eigen::VectorXd>(head.data(), dims.hidden);
    rm.params.bias[0] = doc.at("bias").get<double>();
    return rm;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed reward-model checkpoint: ") + e.what());
  }
}

void RewardModel::save(const std::filesystem::path& path, const json& extra) const {
  write_text_file(path, to_json(extra).dump());
}

RewardModel RewardModel::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

double rm_batch_loss(const RewardParams& p, const std::vector<EncodedPreference>& pairs,
                     RewardParams* g) {
  if (pairs.empty()) return 0.0;
  const double n = static_cast<double>(pairs.size());
  double total = 0.0;
  for (const auto& pr : pairs) {
    const std::vector<std::vector<int>> qs{pr.chosen, pr.rejected};
    const auto r = reward_forward_backward(p, pr.src, qs, {0.0, 0.0}, nullptr);
    total += rm_loss(r[0], r[1]);
    if (g) {
      const double dm = rm_loss_margin_grad(r[0], r[1]) / n;
      reward_forward_backward(p, pr.src, qs, {dm, -dm}, g);
    }
  }
  return total / n;
}

namespace {

std::vector<EncodedPreference> encode_pairs(const Vocab& v, const std::vector<PreferenceText>& pairs) {
  std::vector<EncodedPreference> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({v.encode(p.prompt), v.encode(p.chosen), v.encode(p.rejected)});
  return out;
}

std::pair<double, double> loss_and_accuracy(const RewardParams& p, const std::vector<EncodedPreference>& pairs) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& pr : pairs) {
    const auto r = reward_forward_backward(p, pr.src, {pr.chosen, pr.rejected}, {0.0, 0.0}, nullptr);
    loss += rm_loss(r[0], r[1]);
    if (r[0] > r[1]) ++correct;
  }
  const double n = static_cast<double>(std::max<std::size_t>(pairs.size(), 1));
  return {loss / n, static_cast<double>(correct) / n};
}

}  // namespace

double pairwise_accuracy(const RewardModel& rm, const std::vector<PreferenceText>& pairs) {
  return loss_and_accuracy(rm.params, encode_pairs(rm.vocab, pairs)).second;
}

RmTrainReport train_reward_model(RewardModel& rm, const std::vector<PreferenceText>& pairs,
                                 const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw TrainingError("preference dataset is empty");
  const auto encoded = encode_pairs(rm.vocab, pairs);
  RmTrainReport report;
  std::tie(report.initial_loss, report.initial_accuracy) = loss_and_accuracy(rm.params, encoded);

  std::mt19937_64 engine(cfg.seed);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);
  RewardParams grads = RewardParams::zeros(rm.params.backbone.dims);
  const std::size_t per_update = static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.grad_accum);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i))]);
    for (std::size_t start = 0; start < order.size(); start += per_update) {
      std::vector<EncodedPreference> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + per_update); ++k)
        batch.push_back(encoded[order[k]]);
      grads.for_each([](const char*, auto& m) { m.setZero(); });
      const double loss = rm_batch_loss(rm.params, batch, &grads);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite reward-model loss at epoch " + std::to_string(epoch + 1));
      clip_global_norm(grads, cfg.grad_clip);
      rm.params.add_scaled(grads, -cfg.learning_rate);
    }
    const auto [loss, acc] = loss_and_accuracy(rm.params, encoded);
    if (!std::isfinite(loss)) throw TrainingError("non-finite reward-model loss after epoch " + std::to_string(epoch + 1));
    report.epoch_loss.push_back(loss);
    report.epoch_accuracy.push_back(acc);
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void kl_dfs(const Params& p, const Params& q, const Eigen::VectorXd& cp, const Eigen::VectorXd& cq,
            const Eigen::VectorXd& hp, const Eigen::VectorXd& hq, int prev, int depth, int max_length,
            double logp, double logq, double& acc) {
  const Eigen::VectorXd sp = decoder_step(p, cp, hp, prev).h;
  const Eigen::VectorXd sq = decoder_step(q, cq, hq, prev).h;
  const Eigen::VectorXd lp = next_log_probs(p, sp);
  const Eigen::VectorXd lq = next_log_probs(q, sq);
  for (int v = 0; v < lp.size(); ++v) {
    if (v == kPad || v == kBos) continue;
    const double a = logp + lp[v];
    const double b = logq + lq[v];
    if (v == kEos || depth + 1 == max_length) acc += std::exp(a) * (a - b);
    else kl_dfs(p, q, cp, cq, sp, sq, v, depth + 1, max_length, a, b, acc);
  }
}

}  // namespace

double kl_exact(const Params& policy, const Params& reference, std::span<const int> src, int max_length) {
  if (max_length <= 0) throw Error("max length must be > 0");
  const Eigen::VectorXd cp = encode(policy, src).context;
  const Eigen::VectorXd cq = encode(reference, src).context;
  double acc = 0.0;
  kl_dfs(policy, reference, cp, cq, cp, cq, kBos, 0, max_length, 0.0, 0.0, acc);
  return acc;
}

double kl_estimate(const Params& policy, const Params& reference,
                   const std::vector<std::vector<int>>& prompts, int samples_per_prompt,
                   std::uint64_t seed, int max_length, KlMode mode) {
  if (prompts.empty()) return 0.0;
  double total = 0.0;
  if (mode == KlMode::exact) {
    for (const auto& src : prompts) total += kl_exact(policy, reference, src, max_length);
    return total / static_cast<double>(prompts.size());
  }
  if (samples_per_prompt <= 0) throw Error("samples per prompt must be > 0");
  std::mt19937_64 engine(seed);
  DecodeConfig d;
  d.temperature = 1.0;
  d.top_p = 1.0;
  d.max_length = max_length;
  for (const auto& src : prompts) {
    for (int k = 0; k < samples_per_prompt; ++k) {
      const Generation g = sample_ids(policy, src, d, engine);
      const std::vector<int> t = g.target();
      total += g.log_prob - sequence_log_prob<double>(reference, src, t);
    }
  }
  return total / static_cast<double>(prompts.size() * static_cast<std::size_t>(samples_per_prompt));
}

// ---------------------------------------------------------------------------

void PpoConfig::validate() const {
  if (kl_coef < 0.0) throw ConfigError("KL coefficient must be >= 0");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip ratio must be in (0, 1)");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (prompts_per_iteration <= 0 || rollouts_per_prompt <= 0 || ppo_epochs <= 0)
    throw ConfigError("PPO batch sizes and epochs must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("PPO learning rate must be > 0");
  if (!(baseline_momentum >= 0.0 && baseline_momentum < 1.0))
    throw ConfigError("baseline momentum must be in [0, 1)");
  if (max_length <= 0) throw ConfigError("PPO max length must be > 0");
}

json PpoConfig::to_json() const {
  json j = {{"kl_coef", kl_coef},
            {"clip", clip},
            {"iterations", iterations},
            {"prompts_per_iteration", prompts_per_iteration},
            {"rollouts_per_prompt", rollouts_per_prompt},
            {"ppo_epochs", ppo_epochs},
            {"learning_rate", learning_rate},
            {"grad_clip", grad_clip},
            {"baseline_momentum", baseline_momentum},
            {"max_length", max_length},
            {"seed", seed}};
  j["kl_ceiling"] = std::isfinite(kl_ceiling) ? json(kl_ceiling) : json(nullptr);
  return j;
}

PpoConfig PpoConfig::from_json(const json& doc) {
  PpoConfig c;
  c.kl_coef = doc.value("kl_coef", c.kl_coef);
  c.clip = doc.value("clip", c.clip);
  c.iterations = doc.value("iterations", c.iterations);
  c.prompts_per_iteration = doc.value("prompts_per_iteration", c.prompts_per_iteration);
  c.rollouts_per_prompt = doc.value("rollouts_per_prompt", c.rollouts_per_prompt);
  c.ppo_epochs = doc.value("ppo_epochs", c.ppo_epochs);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.grad_clip = doc.value("grad_clip", c.grad_clip);
  c.baseline_momentum = doc.value("baseline_momentum", c.baseline_momentum);
  c.max_length = doc.value("max_length", c.max_length);
  c.seed = doc.value("seed", c.seed);
  if (doc.contains("kl_ceiling") && !doc.at("kl_ceiling").is_null()) c.kl_ceiling = doc.at("kl_ceiling").get<double>();
  c.validate();
  return c;
}

PpoConfig PpoConfig::paper_reference() {
  PpoConfig c;
  c.learning_rate = 1e-5;
  c.ppo_epochs = 1;
  c.prompts_per_iteration = 8;
  return c;
}

json PpoIterationLog::to_json() const {
  return {{"iter", iter}, {"mean_reward", mean_reward}, {"mean_kl", mean_kl}, {"loss", loss},
          {"clip_fraction", clip_fraction}};
}

double ppo_surrogate(const Params& p, const std::vector<std::vector<int>>& prompts,
                     const std::vector<Rollout>& rollouts, double clip, Params* g,
                     double* clip_fraction) {
  std::size_t n_tokens = 0;
  for (const auto& r : rollouts) n_tokens += r.target.size();
  if (n_tokens == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n_tokens);

  // Group rollouts by prompt so each prompt is encoded once.
  std::map<std::size_t, std::vector<const Rollout*>> groups;
  for (const auto& r : rollouts) groups[r.prompt].push_back(&r);

  double objective = 0.0;
  std::size_t clipped = 0;
  for (const auto& [prompt, rs] : groups) {
    std::vector<std::vector<int>> targets;
    std::vector<std::vector<double>> zero;
    for (const Rollout* r : rs) {
      targets.push_back(r->target);
      zero.emplace_back(r->target.size(), 0.0);
    }
    std::vector<std::vector<double>> logp;
    prompt_group_loss<double>(p, prompts[prompt], targets, zero, nullptr, &logp);
    std::vector<std::vector<double>> coeffs(rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      coeffs[i].assign(targets[i].size(), 0.0);
      for (std::size_t t = 0; t < targets[i].size(); ++t) {
        const double a = rs[i]->advantage[t];
        const double rho = std::exp(logp[i][t] - rs[i]->old_logp[t]);
        const double rho_c = std::clamp(rho, 1.0 - clip, 1.0 + clip);
        const bool is_clipped = (a >= 0.0 && rho > 1.0 + clip) || (a < 0.0 && rho < 1.0 - clip);
        objective += std::min(rho * a, rho_c * a);
        if (is_clipped) ++clipped;
        else coeffs[i][t] = a * rho * inv_n;  // d(-obj)/d logp = -a*rho/N, loss = -sum c*logp
      }
    }
    if (g) prompt_group_loss<double>(p, prompts[prompt], targets, coeffs, g);
  }
  if (clip_fraction) *clip_fraction = static_cast<double>(clipped) * inv_n;
  return -objective * inv_n;
}

std::vector<std::vector<double>> compute_advantages(const std::vector<double>& rewards,
                                                    const std::vector<std::vector<double>>& token_kl,
                                                    double kl_coef, double momentum, double& baseline) {
  std::vector<std::vector<double>> returns(rewards.size());
  double mean_total = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const auto& kl = token_kl[i];
    returns[i].assign(kl.size(), 0.0);
    double to_go = 0.0;
    for (std::size_t t = kl.size(); t-- > 0;) {
      to_go += kl[t];
      returns[i][t] = rewards[i] - kl_coef * to_go;
    }
    mean_total += rewards[i] - kl_coef * to_go;
  }
  if (!rewards.empty()) mean_total /= static_cast<double>(rewards.size());
  if (std::isnan(baseline)) baseline = mean_total;
  for (auto& r : returns)
    for (double& v : r) v -= baseline;
  baseline = momentum * baseline + (1.0 - momentum) * mean_total;
  return returns;
}

PpoReport ppo_refine(Policy& policy, const Params& reference, const RewardFn& reward,
                     const std::vector<std::string>& prompts, const PpoConfig& cfg,
                     const std::function<void(const PpoIterationLog&)>& on_iteration) {
  cfg.validate();
  PpoReport report;
  if (cfg.iterations == 0) return report;
  if (prompts.empty()) throw TrainingError("PPO requires at least one prompt");
  if (!(reference.dims == policy.params.dims)) throw TrainingError("policy and reference shapes differ");

  std::vector<std::vector<int>> encoded;
  for (const auto& p : prompts) encoded.push_back(policy.vocab.encode(p));

  std::mt19937_64 engine(cfg.seed);
  std::vector<std::size_t> order(prompts.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  double baseline = std::numeric_limits<double>::quiet_NaN();
  DecodeConfig rollout_decode;
  rollout_decode.temperature = 1.0;
  rollout_decode.top_p = 1.0;
  rollout_decode.max_length = cfg.max_length;
  Params grads = Params::zeros(policy.params.dims);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    std::vector<std::size_t> batch;
    while (batch.size() < std::min<std::size_t>(static_cast<std::size_t>(cfg.prompts_per_iteration), order.size())) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i))]);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    std::vector<Rollout> rollouts;
    std::vector<double> rewards;
    std::vector<std::vector<double>> token_kl;
    for (std::size_t pi : batch) {
      std::vector<std::vector<int>> targets;
      for (int k = 0; k < cfg.rollouts_per_prompt; ++k)
        targets.push_back(sample_ids(policy.params, encoded[pi], rollout_decode, engine).target());
      std::vector<std::vector<double>> zero;
      for (const auto& t : targets) zero.emplace_back(t.size(), 0.0);
      std::vector<std::vector<double>> logp, logp_ref;
      prompt_group_loss<double>(policy.params, encoded[pi], targets, zero, nullptr, &logp);
      prompt_group_loss<double>(reference, encoded[pi], targets, zero, nullptr, &logp_ref);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        std::vector<int> question = targets[k];
        if (!question.empty() && question.back() == kEos) question.pop_back();
        rewards.push_back(reward(encoded[pi], question));
        std::vector<double> kl(targets[k].size());
        for (std::size_t t = 0; t < kl.size(); ++t) kl[t] = logp[k][t] - logp_ref[k][t];
        token_kl.push_back(std::move(kl));
        rollouts.push_back({pi, std::move(targets[k]), std::move(logp[k]), {}});
      }
    }
    const auto adv = compute_advantages(rewards, token_kl, cfg.kl_coef, cfg.baseline_momentum, baseline);
    for (std::size_t i = 0; i < rollouts.size(); ++i) rollouts[i].advantage = adv[i];

    PpoIterationLog log;
    log.iter = iter;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
      log.mean_reward += rewards[i];
      log.mean_kl += std::accumulate(token_kl[i].begin(), token_kl[i].end(), 0.0);
    }
    log.mean_reward /= static_cast<double>(rollouts.size());
    log.mean_kl /= static_cast<double>(rollouts.size());

    for (int e = 0; e < cfg.ppo_epochs; ++e) {
      grads.set_zero();
      log.loss = ppo_surrogate(policy.params, encoded, rollouts, cfg.clip, &grads, &log.clip_fraction);
      if (!std::isfinite(log.loss)) throw TrainingError("non-finite PPO loss at iteration " + std::to_string(iter));
      clip_global_norm(grads, cfg.grad_clip);
      policy.params.add_scaled(grads, -cfg.learning_rate);
    }
    if (!policy.params.all_finite()) throw TrainingError("non-finite policy after iteration " + std::to_string(iter));
    report.log.push_back(log);
    if (on_iteration) on_iteration(log);
    if (log.mean_kl > cfg.kl_ceiling) {
      report.early_stopped = true;
      report.status = "stopped: mean KL " + std::to_string(log.mean_kl) + " exceeded ceiling " +
                      std::to_string(cfg.kl_ceiling) + " at iteration " + std::to_string(iter);
      break;
    }
  }
  return report;
}

PpoReport ppo_refine(Policy& policy, const Params& reference, const RewardModel& rm,
                     const std::vector<std::string>& prompts, const PpoConfig& cfg,
                     const std::function<void(const PpoIterationLog&)>& on_iteration) {
  if (!(rm.vocab == policy.vocab)) throw TrainingError("reward model and policy vocabularies differ");
  return ppo_refine(
      policy, reference,
      [&](std::span<const int> src, std::span<const int> q) { return rm.score_ids(src, q); }, prompts, cfg,
      on_iteration);
}

}  // namespace rlqg
