// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "rlqg/cli.hpp"
#include "rlqg/rlhf.hpp"
#include "support.hpp"

using namespace rlqg;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream note;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      note << " [" << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

TokenList random_tokens(std::mt19937_64& rng) {
  static const std::vector<std::string> pool = {"the", "a", "marines", "army", "of", "baghdad", "us", "iraq", "x"};
  TokenList t(rng() % 6);
  for (auto& s : t) s = pool[rng() % pool.size()];
  return t;
}

// Multiset intersection by repeated removal.
double cor_oracle(const TokenList& gold, const TokenList& pred) {
  if (gold.empty() && pred.empty()) return 1.0;
  if (gold.empty() || pred.empty()) return 0.0;
  TokenList rest = gold;
  double common = 0;
  for (const auto& p : pred) {
    if (auto it = std::find(rest.begin(), rest.end(), p); it != rest.end()) {
      rest.erase(it);
      ++common;
    }
  }
  return common / static_cast<double>(std::max(gold.size(), pred.size()));
}

void cor_oracle_equivalence(Outcome& o) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  int mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const TokenList g = random_tokens(rng), p = random_tokens(rng);
    if (cor_tokens(g, p) != cor_oracle(g, p)) ++mismatches;
  }
  const double secs = seconds_since(start);
  o.note << "mismatches=" << mismatches << " time=" << secs << "s";
  o.require(mismatches == 0, "disagreement");
  o.require(secs < 1.0, "too slow");
}

void cor_worked_cases(Outcome& o) {
  const double a = cor("Marines", "the Marines");
  const double b = cor("Callum McCarthy", "Howard Davies");
  const double c = cor("", "");
  o.note << a << " " << b << " " << c;
  o.require(a == 0.5 && b == 0.0 && c == 1.0, "value");
}

void selection_suite(Outcome& o) {
  const SelectionConfig cfg;
  o.require(std::abs(combined_score(0.8, 1.0, cfg) - 0.94) < 1e-15, "S_q");
  const auto pair = select_pair(std::vector<double>{0.94, 0.10}, cfg);
  o.require(pair && pair->chosen == 0 && pair->rejected == 1, "{0.94,0.10}");
  o.require(!select_pair(std::vector<double>{0.60, 0.05}, cfg), "{0.60,0.05}");
  o.require(!select_pair(std::vector<double>{0.90, 0.70}, cfg), "{0.90,0.70}");
  std::mt19937_64 rng(7);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> s(1 + rng() % 6);
    for (auto& v : s) v = static_cast<double>(rng() % 21) / 20.0;
    const double hi = *std::max_element(s.begin(), s.end());
    const double lo = *std::min_element(s.begin(), s.end());
    const bool keep = hi > cfg.alpha && hi - lo > cfg.beta;
    const auto got = select_pair(s, cfg);
    if (got.has_value() != keep) {
      ++mismatches;
      continue;
    }
    if (got && (s[got->chosen] != hi || s[got->rejected] != lo ||
                got->chosen != static_cast<std::size_t>(std::find(s.begin(), s.end(), hi) - s.begin()) ||
                got->rejected != static_cast<std::size_t>(std::find(s.begin(), s.end(), lo) - s.begin())))
      ++mismatches;
  }
  o.note << "oracle mismatches=" << mismatches << "/10000";
  o.require(mismatches == 0, "oracle");
}

void rm_loss_values(Outcome& o) {
  const double a = rm_loss(0.0, 0.0), b = rm_loss(std::log(3.0), 0.0);
  o.note << a << " " << b;
  o.require(std::abs(a - std::log(2.0)) < 1e-9, "ln 2");
  o.require(std::abs(b - std::log(4.0 / 3.0)) < 1e-9, "ln 4/3");
  // Swapping the pair changes the loss by exactly the margin.
  o.require(std::abs(rm_loss(0.0, std::log(3.0)) - b - std::log(3.0)) < 1e-9, "flip");
}

std::vector<EncodedPreference> random_preferences(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto seq = [&] {
    std::vector<int> s(1 + rng() % 3);
    for (auto& t : s) t = 4 + static_cast<int>(rng() % 4);
    return s;
  };
  std::vector<EncodedPreference> out;
  for (int i = 0; i < n; ++i) out.push_back({seq(), seq(), seq()});
  return out;
}

void gradient_checks(Outcome& o) {
  const auto start = Clock::now();
  const Policy pol = test::tiny_policy(4, 5, 6, 1, 3.0);
  o.require(pol.params.parameter_count() <= 5000, "model too large");

  const std::vector<std::pair<std::vector<int>, std::vector<int>>> batch = {
      {{4, 5, 6}, {5, 7, kEos}}, {{7, 4}, {4, 4, 6, kEos}}, {{6}, {kEos}}};
  const auto ce = grad_check(pol.params, batch, 1e-5);

  const RewardModel rm = RewardModel::from_policy(pol, 11);
  const auto pairs = random_preferences(4, 2);
  RewardParams rg = RewardParams::zeros(pol.params.dims);
  rm_batch_loss(rm.params, pairs, &rg);
  const auto rmc = finite_difference_check(
      rm.params, rg, [&](const RewardParams& q) { return rm_batch_loss(q, pairs, nullptr); }, 1e-5);

  // PPO surrogate with ratios on both sides of the clip range, away from its kinks.
  const double clip = 0.2;
  const std::vector<std::vector<int>> prompts = {{4, 5}, {6}, {5, 5, 4}};
  std::mt19937_64 rng(9);
  DecodeConfig d;
  d.temperature = 1.0;
  d.top_p = 1.0;
  d.max_length = 4;
  std::vector<Rollout> rollouts;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (int k = 0; k < 2; ++k) {
      Rollout r;
      r.prompt = i;
      r.target = sample_ids(pol.params, prompts[i], d, rng).target();
      std::vector<std::vector<double>> logp;
      prompt_group_loss<double>(pol.params, prompts[i], {r.target}, {std::vector<double>(r.target.size(), 0.0)},
                                nullptr, &logp);
      for (std::size_t t = 0; t < r.target.size(); ++t) {
        double shift = 0.0;
        do shift = (uniform01(rng) - 0.5) * 0.8;
        while (std::abs(std::exp(-shift) - (1 + clip)) < 1e-3 || std::abs(std::exp(-shift) - (1 - clip)) < 1e-3);
        r.old_logp.push_back(logp[0][t] + shift);
        r.advantage.push_back(uniform01(rng) - 0.5);
      }
      rollouts.push_back(std::move(r));
    }
  }
  Params pg = Params::zeros(pol.params.dims);
  ppo_surrogate(pol.params, prompts, rollouts, clip, &pg);
  const auto ppo = finite_difference_check(
      pol.params, pg, [&](const Params& q) { return ppo_surrogate(q, prompts, rollouts, clip, nullptr); }, 1e-5);

  const double secs = seconds_since(start);
  o.note << "params=" << pol.params.parameter_count() << " ce=" << ce.max_rel_error << " rm=" << rmc.max_rel_error
         << " ppo=" << ppo.max_rel_error << " time=" << secs << "s";
  o.require(ce.max_rel_error < 1e-4, "ce");
  o.require(rmc.max_rel_error < 1e-4, "rm");
  o.require(ppo.max_rel_error < 1e-4, "ppo");
  o.require(secs < 30.0, "too slow");
}

void beam_oracle(Outcome& o) {
  int wrong = 0;
  double worst_mass = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Policy p = test::tiny_policy(1, 3, 4, seed, 4.0);  // vocab of 5
    const std::vector<int> src = {4, 3};
    std::vector<std::pair<double, std::vector<int>>> all;
    double mass = 0.0;
    test::enumerate_sequences(p.vocab.size(), 4, [&](const std::vector<int>& s) {
      const double lp = sequence_log_prob<double>(p.params, src, s);
      mass += std::exp(lp);
      if (s.back() == kEos) all.emplace_back(lp, s);
    });
    worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    DecodeConfig cfg;
    cfg.beam_size = 8;
    cfg.num_return = 3;
    cfg.max_length = 4;
    const auto beam = beam_search_ids(p.params, src, cfg);
    if (beam.hypotheses.size() != 3) {
      ++wrong;
      continue;
    }
    for (int k = 0; k < 3; ++k)
      if (beam.hypotheses[k].target() != all[k].second) ++wrong;
  }
  o.note << "rank errors=" << wrong << " |sum-1|=" << worst_mass;
  o.require(wrong == 0, "beam");
  o.require(worst_mass < 1e-6, "normalization");
}

void kl_properties(Outcome& o) {
  const Policy p = test::tiny_policy(2, 3, 4, 1, 3.0);
  const Policy q = test::tiny_policy(2, 3, 4, 2, 3.0);
  const std::vector<int> src = {4, 5, 4};
  o.require(kl_exact(p.params, p.params, src, 4) == 0.0, "KL(f,f)");
  double closed = 0.0;
  test::enumerate_sequences(p.vocab.size(), 4, [&](const std::vector<int>& s) {
    const double lp = sequence_log_prob<double>(p.params, src, s);
    closed += std::exp(lp) * (lp - sequence_log_prob<double>(q.params, src, s));
  });
  const double exact = kl_exact(p.params, q.params, src, 4);
  o.note << "exact=" << exact << " closed=" << closed;
  o.require(std::abs(exact - closed) < 1e-9, "closed form");
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Policy a = test::tiny_policy(2, 3, 3, 100 + s, 3.0);
    const Policy b = test::tiny_policy(2, 3, 3, 200 + s, 3.0);
    if (kl_exact(a.params, b.params, std::vector<int>{4}, 3) < 0.0) o.require(false, "negative");
  }
}

void reward_model_learning(Outcome& o) {
  const auto start = Clock::now();
  // Separable: chosen questions draw from the first half of the vocabulary, rejected ones from the second.
  std::mt19937_64 rng(13);
  const int words = 8;
  auto phrase = [&](int lo, int span) {
    std::string s;
    for (std::size_t n = 1 + rng() % 4; n-- > 0;)
      s += (s.empty() ? "" : " ") + std::string(1, static_cast<char>('a' + lo + rng() % span));
    return s;
  };
  std::vector<PreferenceText> pairs;
  for (int i = 0; i < 200; ++i) {
    const std::string prompt = phrase(0, words);
    const std::string chosen = phrase(0, words / 2);
    pairs.push_back({prompt, chosen, phrase(words / 2, words / 2)});
  }
  Policy pol = Policy::create(test::letter_vocab(words), 8, 8, 3);
  RewardModel rm = RewardModel::from_policy(pol, 3);
  TrainConfig cfg = TrainConfig::preset("toy-rm");
  const auto rep = train_reward_model(rm, pairs, cfg);
  const double acc = pairwise_accuracy(rm, pairs);
  const double secs = seconds_since(start);
  o.note << "accuracy=" << acc << " epochs=" << rep.epoch_loss.size() << " time=" << secs << "s";
  o.require(acc >= 0.95, "accuracy");
  o.require(secs < 60.0, "too slow");
}

void ppo_trend(Outcome& o) {
  const auto cfg_path = test::source_dir() / "data" / "configs" / "synthetic.json";
  const auto run = [&](const std::string& name, double& secs) {
    RunConfig cfg = load_config(cfg_path);
    const auto dir = test::temp_dir(name);
    cfg.out = dir.string();
    std::ostringstream out, err;
    const auto start = Clock::now();
    const int rc = run_subcommand("e2e", cfg, out, err);
    secs = seconds_since(start);
    if (rc != kExitOk) o.note << "e2e exit " << rc << ": " << err.str();
    return dir;
  };
  double t1 = 0, t2 = 0;
  const auto a = run("accept-e2e-a", t1);
  const auto b = run("accept-e2e-b", t2);
  if (!o.ok || !std::filesystem::exists(a / "eval" / "reward_comparison.json")) {
    o.require(false, "e2e failed");
    return;
  }
  const json reward = json::parse(read_text_file(a / "eval" / "reward_comparison.json"));
  const json table = json::parse(read_text_file(a / "eval" / "comparison.json"));
  std::map<std::string, double> cor;
  for (const auto& row : table["rows"]) cor[row["method"].get<std::string>()] = row["cor"].get<double>();
  double tmpl = NAN;
  for (const auto& [method, v] : cor)
    if (method.starts_with("Template")) tmpl = v;
  const double delta = reward["delta"].get<double>();
  o.note << "reward sft=" << reward["sft"]["mean"].get<double>() << " rlqg=" << reward["rlqg"]["mean"].get<double>()
         << " delta=" << delta << " COR template=" << tmpl << " sft=" << cor["SFT"] << " rlqg=" << cor["RLQG"]
         << " time=" << t1 << "s";
  o.require(delta >= 0.05, "reward delta");
  o.require(cor["RLQG"] >= cor["SFT"] && cor["SFT"] >= tmpl, "COR ordering");
  o.require(t1 < 300.0 && t2 < 300.0, "too slow");

  bool identical = true;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), a);
    if (!std::filesystem::exists(b / rel) || read_text_file(e.path()) != read_text_file(b / rel)) {
      identical = false;
      o.note << " differs: " << rel.string();
    }
  }
  o.require(identical, "not bit-reproducible");
}

// The question answering few-shot prompt, transcribed from the published table.
const char* kQaFewshotLayout =
    "System:\n"
    "You are a precise and concise assistant. Your task is to extract some words based directly on the provided "
    "context to answer the given questions. Please wrap your answer with the following tags: [ANS] [/ANS]. If a "
    "question has multiple correct answers within the context, list them all, separated by commas. If there is no "
    "answer in the context, just reply [ANS] None [/ANS]. Do NOT add any introductory phrases, explanations, or "
    "additional information outside of the given context.\n"
    "\nUser:\n"
    "question: Who made the battle in Baghdad? context: US Secretary of Defense Donald Rumsfeld dismissed worries "
    "that there were insufficient forces in the Gulf region if the battle for Baghdad goes wrong.\n"
    "Assistant:\n[ANS] US [/ANS]\n"
    "\nUser:\n"
    "question: Who was nominated? context: Senator Christopher Dodd of Connecticut made the announcement today that "
    "he would not be the 10th candidate for the nomination.\n"
    "Assistant:\n[ANS] candidate [/ANS]\n"
    "\nUser:\n"
    "question: Who is person in former event? context: We're talking about possibilities of full scale war with "
    "former Congressman Tom Andrews, Democrat of Maine.\n"
    "Assistant:\n[ANS] Tom Andrews [/ANS]\n"
    "\nUser:\n"
    "question: Who died that cause Clinton suffered greatly? context: Clinton suffered greatly over the 19 Rangers "
    "that died, 18 on the 3rd of October and Matt Reersen (ph) three days later.\n"
    "Assistant:\n[ANS] Rangers, Matt Reersen [/ANS]\n"
    "\nUser:\n"
    "question: Where did the election takes place? context: He lost an election to a dead man.\n"
    "Assistant:\n[ANS] None [/ANS]\n"
    "\nUser:\n"
    "question: Who attacked? context: Marines attacked insurgents in Falluja.\n";

void protocol_fidelity(Outcome& o) {
  const std::string rendered =
      qa_transcript("Who attacked?", "Marines attacked insurgents in Falluja.", qa_fewshot_bank(), 5).render();
  if (rendered != kQaFewshotLayout) {
    const auto diff = std::mismatch(rendered.begin(), rendered.end(), std::string_view(kQaFewshotLayout).begin(),
                                    std::string_view(kQaFewshotLayout).end());
    o.note << "layout differs at byte " << (diff.first - rendered.begin()) << "; ";
    o.require(false, "layout");
  }
  o.require(parse_answer("[ANS] US [/ANS]").values == std::vector<std::string>{"US"}, "US");
  o.require(parse_answer("[ANS] Rangers, Matt Reersen [/ANS]").values ==
                std::vector<std::string>{"Rangers", "Matt Reersen"},
            "multi");
  const auto none = parse_answer("[ANS] None [/ANS]");
  o.require(none.none() && !none.untagged, "None");
  o.note << "transcript bytes=" << rendered.size();
}

void large_kl_coefficient(Outcome& o) {
  Policy p = test::tiny_policy(3, 6, 8, 5);
  const Params ref = p.params;
  const std::vector<std::string> prompts = {"a b", "b c", "c a", "a a c", "b"};
  const auto likes_a = [](std::span<const int>, std::span<const int> q) {
    double r = 0.0;
    for (std::size_t t = 0; t < q.size(); ++t)
      if (q[t] == 4) r += 1.0 / static_cast<double>(t + 1);
    return r;
  };
  PpoConfig cfg;
  cfg.kl_coef = 1e6;
  cfg.iterations = 40;
  cfg.prompts_per_iteration = 5;
  cfg.rollouts_per_prompt = 4;
  cfg.max_length = 4;
  ppo_refine(p, ref, likes_a, prompts, cfg);
  double worst = 0.0;
  for (const auto& text : prompts) {
    const auto src = p.vocab.encode(text);
    worst = std::max(worst, kl_exact(p.params, ref, src, cfg.max_length));
  }
  o.note << "max exact KL=" << worst;
  o.require(worst < 1e-3, "KL");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"cor-oracle-equivalence", cor_oracle_equivalence},
      {"cor-worked-cases", cor_worked_cases},
      {"selection-score-and-gate", selection_suite},
      {"reward-loss-values", rm_loss_values},
      {"gradient-checks", gradient_checks},
      {"beam-search-oracle", beam_oracle},
      {"kl-properties", kl_properties},
      {"reward-model-learning", reward_model_learning},
      {"ppo-trend-end-to-end", ppo_trend},
      {"qa-protocol-fidelity", protocol_fidelity},
      {"large-kl-coefficient-limit", large_kl_coefficient},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.note << " threw: " << e.what();
    }
    if (!o.ok) ++failures;
    std::cout << (o.ok ? "PASS " : "FAIL ") << name << ": " << o.note.str() << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
