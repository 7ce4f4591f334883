#include "rlqg/toymodel.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

namespace rlqg {

namespace {

const std::vector<std::string> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};

bool is_split_punct(char c) {
  switch (c) {
    case '.': case ',': case '?': case '!': case ';': case ':': case '(': case ')': case '"':
      return true;
    default:
      return false;
  }
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

}  // namespace

std::vector<std::string> model_tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    if (text[i] == '<') {
      const std::size_t close = text.find('>', i);
      if (close != std::string_view::npos) {
        const std::string_view inner = text.substr(i + 1, close - i - 1);
        if (!inner.empty() && std::all_of(inner.begin(), inner.end(),
                                          [](char c) { return c >= 'a' && c <= 'z'; })) {
          out.emplace_back(text.substr(i, close - i + 1));
          i = close + 1;
          continue;
        }
      }
    }
    if (is_split_punct(text[i])) {
      out.emplace_back(1, text[i++]);
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j]) && !is_split_punct(text[j])) ++j;
    out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  bool glue_next = false;
  for (const auto& t : tokens) {
    const bool closing = t.size() == 1 && is_split_punct(t[0]) && t[0] != '(' && t[0] != '"';
    if (!out.empty() && !closing && !glue_next) out += ' ';
    out += t;
    glue_next = t == "(";
  }
  return out;
}

Vocab::Vocab() : Vocab(kReserved) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReserved.size() ||
      !std::equal(kReserved.begin(), kReserved.end(), tokens_.begin()))
    throw Error("vocabulary must start with <pad> <bos> <eos> <unk>");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw Error("duplicate vocabulary token '" + tokens_[i] + "'");
}

Vocab Vocab::build(const std::vector<std::string>& texts) {
  std::set<std::string> seen;
  for (const auto& t : texts)
    for (auto& tok : model_tokenize(t)) seen.insert(std::move(tok));
  std::vector<std::string> tokens = kReserved;
  for (const auto& tok : seen)
    if (std::find(kReserved.begin(), kReserved.end(), tok) == kReserved.end()) tokens.push_back(tok);
  return Vocab(std::move(tokens));
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& t : model_tokenize(text)) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> toks;
  for (int i : ids) {
    if (i == kEos) break;
    if (i == kPad || i == kBos) continue;
    toks.push_back(token(i));
  }
  return detokenize(toks);
}

Vocab Vocab::from_json(const json& doc) { return Vocab(doc.get<std::vector<std::string>>()); }

// ---------------------------------------------------------------------------

Policy Policy::create(Vocab vocab, int embed, int hidden, std::uint64_t seed) {
  if (embed <= 0 || hidden <= 0) throw ConfigError("model dimensions must be positive");
  Policy p{std::move(vocab), {}};
  p.params = Params::random({p.vocab.size(), embed, hidden}, seed);
  return p;
}

json params_to_json(const Params& p) {
  json shapes = json::object();
  json values = json::object();
  p.for_each([&](const char* name, const auto& m) {
    shapes[name] = {m.rows(), m.cols()};
    values[name] = std::vector<double>(m.data(), m.data() + m.size());
  });
  return {{"shapes", shapes}, {"values", values}};
}

Params params_from_json(const json& doc, const ModelDims& dims) {
  Params p = Params::zeros(dims);
  p.for_each([&](const char* name, auto& m) {
    const auto& shape = doc.at("shapes").at(name);
    if (shape.at(0).get<Eigen::Index>() != m.rows() || shape.at(1).get<Eigen::Index>() != m.cols())
      throw Error(std::string("checkpoint tensor '") + name + "' has shape " + shape.dump() +
                  ", expected [" + std::to_string(m.rows()) + "," + std::to_string(m.cols()) + "]");
    const auto values = doc.at("values").at(name).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(values.size()) != m.size())
      throw Error(std::string("checkpoint tensor '") + name + "' has the wrong number of values");
    std::copy(values.begin(), values.end(), m.data());
  });
  if (!p.all_finite()) throw Error("checkpoint holds non-finite parameters");
  return p;
}

json Policy::to_json(const json& extra) const {
  json j = extra;
  j["format"] = "rlqg-policy";
  j["version"] = 1;
  j["dims"] = {{"vocab", params.dims.vocab}, {"embed", params.dims.embed}, {"hidden", params.dims.hidden}};
  j["vocab"] = vocab.to_json();
  j["params"] = params_to_json(params);
  return j;
}

Policy Policy::from_json(const json& doc) {
  try {
    if (doc.value("format", "") != "rlqg-policy") throw Error("not a policy checkpoint");
    if (doc.value("version", 0) != 1) throw Error("unsupported checkpoint version");
    const ModelDims dims{doc.at("dims").at("vocab").get<int>(), doc.at("dims").at("embed").get<int>(),
                         doc.at("dims").at("hidden").get<int>()};
    Policy p{Vocab::from_json(doc.at("vocab")), {}};
    if (p.vocab.size() != dims.vocab) throw Error("checkpoint vocab size differs from its dims");
    p.params = params_from_json(doc.at("params"), dims);
    return p;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void Policy::save(const std::filesystem::path& path, const json& extra) const {
  write_text_file(path, to_json(extra).dump());
}

Policy Policy::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (epochs <= 0) throw ConfigError("epochs must be > 0");
  if (batch_size <= 0) throw ConfigError("batch size must be > 0");
  if (grad_accum <= 0) throw ConfigError("gradient accumulation must be > 0");
  if (grad_clip < 0.0) throw ConfigError("gradient clip must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"name", name},         {"learning_rate", learning_rate}, {"epochs", epochs},
          {"batch_size", batch_size}, {"grad_accum", grad_accum},   {"grad_clip", grad_clip},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& doc, const TrainConfig& defaults) {
  TrainConfig c = doc.contains("preset") ? preset(doc.at("preset").get<std::string>()) : defaults;
  c.name = doc.value("name", c.name);
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.epochs = doc.value("epochs", c.epochs);
  c.batch_size = doc.value("batch_size", c.batch_size);
  c.grad_accum = doc.value("grad_accum", c.grad_accum);
  c.grad_clip = doc.value("grad_clip", c.grad_clip);
  c.seed = doc.value("seed", c.seed);
  c.validate();
  return c;
}

TrainConfig TrainConfig::preset(std::string_view name) {
  // Paper presets are reference values for out-of-band LLM fine-tuning.
  static const std::map<std::string, TrainConfig, std::less<>> kPresets = {
      {"toy-sft", {"toy-sft", 0.3, 60, 16, 1, 5.0, 42}},
      {"toy-rm", {"toy-rm", 1e-2, 20, 8, 1, 5.0, 42}},
      {"toy-ppo", {"toy-ppo", 5e-2, 1, 32, 1, 1.0, 42}},
      {"paper-sft", {"paper-sft", 5e-5, 3, 16, 4, 1.0, 42}},
      {"paper-rl", {"paper-rl", 1e-5, 1, 8, 1, 1.0, 42}},
      {"paper-rm", {"paper-rm", 1e-6, 1, 8, 1, 1.0, 42}},
  };
  auto it = kPresets.find(name);
  if (it == kPresets.end()) throw ConfigError("unknown training preset '" + std::string(name) + "'");
  return it->second;
}

void DecodeConfig::validate() const {
  if (max_length <= 0) throw ConfigError("max length must be > 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top-p must be in (0, 1]");
  if (beam_size <= 0) throw ConfigError("beam size must be > 0");
  if (num_return <= 0 || num_return > beam_size)
    throw ConfigError("return count must be in [1, beam size]");
}

json DecodeConfig::to_json() const {
  return {{"max_length", max_length}, {"temperature", temperature}, {"top_p", top_p},
          {"beam_size", beam_size},   {"num_return", num_return},   {"seed", seed},
          {"greedy", greedy}};
}

DecodeConfig DecodeConfig::from_json(const json& doc, const DecodeConfig& defaults) {
  DecodeConfig c = defaults;
  c.max_length = doc.value("max_length", c.max_length);
  c.temperature = doc.value("temperature", c.temperature);
  c.top_p = doc.value("top_p", c.top_p);
  c.beam_size = doc.value("beam_size", c.beam_size);
  c.num_return = doc.value("num_return", c.num_return);
  c.seed = doc.value("seed", c.seed);
  c.greedy = doc.value("greedy", c.greedy);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

std::vector<int> Generation::target() const {
  std::vector<int> t = ids;
  if (finished) t.push_back(kEos);
  return t;
}

namespace {

int argmax_lowest(const Eigen::VectorXd& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

template <typename Choose>
Generation decode_loop(const Params& p, std::span<const int> src, int max_length, Choose&& choose) {
  const Eigen::VectorXd context = encode(p, src).context;
  Eigen::VectorXd h = context;
  int prev = kBos;
  Generation g;
  for (int t = 0; t < max_length; ++t) {
    h = decoder_step(p, context, h, prev).h;
    const Eigen::VectorXd lp = next_log_probs(p, h);
    const int tok = choose(lp);
    g.log_prob += lp[tok];
    if (tok == kEos) {
      g.finished = true;
      break;
    }
    g.ids.push_back(tok);
    prev = tok;
  }
  return g;
}

}  // namespace

Generation greedy_decode(const Params& p, std::span<const int> src, int max_length) {
  return decode_loop(p, src, max_length, [](const Eigen::VectorXd& lp) { return argmax_lowest(lp); });
}

Generation sample_ids(const Params& p, std::span<const int> src, const DecodeConfig& cfg,
                      std::mt19937_64& engine) {
  cfg.validate();
  if (cfg.greedy) return greedy_decode(p, src, cfg.max_length);
  std::vector<int> order;
  return decode_loop(p, src, cfg.max_length, [&](const Eigen::VectorXd& lp) {
    Eigen::VectorXd probs = (lp / cfg.temperature).array().exp().matrix();
    probs /= probs.sum();
    order.resize(static_cast<std::size_t>(probs.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < order.size() && (keep == 0 || mass < cfg.top_p)) mass += probs[order[keep++]];
    double u = uniform01(engine) * mass;
    for (std::size_t k = 0; k < keep; ++k) {
      u -= probs[order[k]];
      if (u < 0.0) return order[k];
    }
    return order[keep - 1];
  });
}

BeamResult beam_search_ids(const Params& p, std::span<const int> src, const DecodeConfig& cfg) {
  cfg.validate();
  struct Beam {
    std::vector<int> ids;
    double score;
    Eigen::VectorXd h;
  };
  const Eigen::VectorXd context = encode(p, src).context;
  std::vector<Beam> live{{{}, 0.0, context}};
  std::vector<Generation> done;
  const auto n_return = static_cast<std::size_t>(cfg.num_return);
  auto nth_done = [&] {
    std::vector<double> s;
    for (const auto& d : done) s.push_back(d.log_prob);
    std::nth_element(s.begin(), s.begin() + static_cast<long>(n_return - 1), s.end(), std::greater<>());
    return s[n_return - 1];
  };

  for (int t = 0; t < cfg.max_length && !live.empty(); ++t) {
    // Scores only decrease, so no live beam can beat a full completed list.
    if (done.size() >= n_return) {
      const double bar = nth_done();
      double best_live = live.front().score;
      for (const auto& b : live) best_live = std::max(best_live, b.score);
      if (best_live < bar) break;
    }
    struct Cand {
      double score;
      std::size_t beam;
      int tok;
    };
    std::vector<Cand> cands;
    std::vector<Eigen::VectorXd> states(live.size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      const int prev = live[b].ids.empty() ? kBos : live[b].ids.back();
      states[b] = decoder_step(p, context, live[b].h, prev).h;
      const Eigen::VectorXd lp = next_log_probs(p, states[b]);
      for (int v = 0; v < lp.size(); ++v) {
        if (v == kPad || v == kBos) continue;
        const double s = live[b].score + lp[v];
        if (v == kEos) done.push_back({live[b].ids, true, s});
        else if (t + 1 < cfg.max_length) cands.push_back({s, b, v});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (cands.size() > static_cast<std::size_t>(cfg.beam_size)) cands.resize(static_cast<std::size_t>(cfg.beam_size));
    std::vector<Beam> next;
    next.reserve(cands.size());
    for (const auto& c : cands) {
      Beam nb{live[c.beam].ids, c.score, states[c.beam]};
      nb.ids.push_back(c.tok);
      next.push_back(std::move(nb));
    }
    live = std::move(next);
  }

  std::stable_sort(done.begin(), done.end(),
                   [](const Generation& a, const Generation& b) { return a.log_prob > b.log_prob; });
  BeamResult res;
  if (done.size() > n_return) done.resize(n_return);
  res.short_list = done.size() < n_return;
  res.hypotheses = std::move(done);
  return res;
}

double log_prob(const Policy& policy, std::string_view prompt, std::string_view output) {
  std::vector<int> target = policy.vocab.encode(output);
  target.push_back(kEos);
  return sequence_log_prob<double>(policy.params, policy.vocab.encode(prompt), target);
}

std::string sample(const Policy& policy, std::string_view prompt, const DecodeConfig& cfg) {
  std::mt19937_64 engine(cfg.seed);
  return policy.vocab.decode(sample_ids(policy.params, policy.vocab.encode(prompt), cfg, engine).ids);
}

std::vector<std::pair<std::string, double>> beam_search(const Policy& policy, std::string_view prompt,
                                                        const DecodeConfig& cfg, bool* short_list) {
  const BeamResult r = beam_search_ids(policy.params, policy.vocab.encode(prompt), cfg);
  if (short_list) *short_list = r.short_list;
  std::vector<std::pair<std::string, double>> out;
  for (const auto& h : r.hypotheses) out.emplace_back(policy.vocab.decode(h.ids), h.log_prob);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct SftGroup {
  std::vector<int> src;
  std::vector<std::vector<int>> targets;
  std::vector<std::vector<double>> coeffs;
  std::size_t tokens = 0;
};

std::vector<SftGroup> group_pairs(const Vocab& vocab,
                                  const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<SftGroup> groups;
  std::map<std::string, std::size_t> by_prompt;
  for (const auto& [prompt, target] : pairs) {
    auto [it, fresh] = by_prompt.try_emplace(prompt, groups.size());
    if (fresh) groups.push_back({vocab.encode(prompt), {}, {}, 0});
    SftGroup& g = groups[it->second];
    std::vector<int> t = vocab.encode(target);
    t.push_back(kEos);
    g.tokens += t.size();
    g.coeffs.emplace_back(t.size(), 1.0);
    g.targets.push_back(std::move(t));
  }
  return groups;
}

double groups_loss(const Params& p, const std::vector<SftGroup>& groups, std::size_t* tokens) {
  double loss = 0.0;
  std::size_t n = 0;
  for (const auto& g : groups) {
    loss += prompt_group_loss<double>(p, g.src, g.targets, g.coeffs, nullptr);
    n += g.tokens;
  }
  if (tokens) *tokens = n;
  return loss;
}

}  // namespace

double mean_token_loss(const Policy& policy,
                       const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::size_t n = 0;
  const double loss = groups_loss(policy.params, group_pairs(policy.vocab, pairs), &n);
  return n == 0 ? 0.0 : loss / static_cast<double>(n);
}

SftReport sft_train(Policy& policy, const std::vector<std::pair<std::string, std::string>>& pairs,
                    const TrainConfig& cfg) {
  cfg.validate();
  if (pairs.empty()) throw TrainingError("no training pairs");
  std::vector<SftGroup> groups = group_pairs(policy.vocab, pairs);
  SftReport report;
  std::size_t total_tokens = 0;
  report.initial_loss = groups_loss(policy.params, groups, &total_tokens) / static_cast<double>(total_tokens);

  std::mt19937_64 engine(cfg.seed);
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  Params grads = Params::zeros(policy.params.dims);
  const std::size_t per_update = static_cast<std::size_t>(cfg.batch_size) * static_cast<std::size_t>(cfg.grad_accum);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(engine) * static_cast<double>(i))]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += per_update) {
      grads.set_zero();
      const std::size_t end = std::min(order.size(), start + per_update);
      for (std::size_t k = start; k < end; ++k) {
        const SftGroup& g = groups[order[k]];
        const double loss = prompt_group_loss<double>(policy.params, g.src, g.targets, g.coeffs, &grads);
        if (!std::isfinite(loss))
          throw TrainingError("non-finite SFT loss at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(report.steps + 1));
        epoch_loss += loss;
      }
      clip_global_norm(grads, cfg.grad_clip);
      policy.params.add_scaled(grads, -cfg.learning_rate);
      ++report.steps;
    }
    if (!policy.params.all_finite()) throw TrainingError("non-finite parameters after epoch " + std::to_string(epoch + 1));
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(total_tokens));
  }
  return report;
}

GradCheckResult grad_check(const Params& p,
                           const std::vector<std::pair<std::vector<int>, std::vector<int>>>& batch,
                           double epsilon) {
  if (!(epsilon > 0.0)) throw Error("epsilon must be > 0");
  auto loss = [&](const Params& q, Params* g) {
    double total = 0.0;
    for (const auto& [src, tgt] : batch)
      total += prompt_group_loss<double>(q, src, {tgt}, {std::vector<double>(tgt.size(), 1.0)}, g);
    return total;
  };
  Params analytic = Params::zeros(p.dims);
  loss(p, &analytic);
  return finite_difference_check(p, analytic, [&](const Params& q) { return loss(q, nullptr); }, epsilon);
}

}  // namespace rlqg
