#include "rlqg/preference.hpp"

#include <algorithm>

namespace rlqg {

void SelectionConfig::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("selection weights must be >= 0");
  const double top = lambda1 + lambda2;
  if (alpha < 0.0 || alpha > top) throw ConfigError("alpha must be in [0, lambda1 + lambda2]");
  if (beta < 0.0 || beta > top) throw ConfigError("beta must be in [0, lambda1 + lambda2]");
}

json SelectionConfig::to_json() const {
  return {{"lambda1", lambda1}, {"lambda2", lambda2}, {"alpha", alpha}, {"beta", beta}};
}

SelectionConfig SelectionConfig::from_json(const json& doc) {
  SelectionConfig c;
  c.lambda1 = doc.value("lambda1", c.lambda1);
  c.lambda2 = doc.value("lambda2", c.lambda2);
  c.alpha = doc.value("alpha", c.alpha);
  c.beta = doc.value("beta", c.beta);
  c.validate();
  return c;
}

double combined_score(double semsim, double cor, const SelectionConfig& cfg) {
  return cfg.lambda1 * semsim + cfg.lambda2 * cor;
}

ScoredCandidate score_candidate(std::string_view context, std::string_view recovered,
                                const std::vector<std::string>& golds, const Answer& answer,
                                const SelectionConfig& cfg, const Embedder& embedder) {
  ScoredCandidate c;
  c.recovered = std::string(recovered);
  c.answer = answer;
  const SemSimResult s = semsim(context, recovered, embedder);
  c.semsim = s.value;
  c.semsim_degenerate = s.degenerate;
  c.cor = cor_multi(golds, answer.render());
  c.score = combined_score(c.semsim, c.cor, cfg);
  return c;
}

std::optional<Selection> select_pair(const std::vector<double>& scores, const SelectionConfig& cfg) {
  if (scores.empty()) return std::nullopt;
  Selection s;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[s.chosen]) s.chosen = i;
    if (scores[i] < scores[s.rejected]) s.rejected = i;
  }
  const double best = scores[s.chosen];
  s.gap = best - scores[s.rejected];
  if (!(best > cfg.alpha) || !(s.gap > cfg.beta)) return std::nullopt;
  return s;
}

std::optional<Selection> select_pair(const std::vector<ScoredCandidate>& scored,
                                     const SelectionConfig& cfg) {
  std::vector<double> scores;
  scores.reserve(scored.size());
  for (const auto& c : scored) scores.push_back(c.score);
  return select_pair(scores, cfg);
}

json BuildTally::to_json() const {
  return {{"instances", instances},
          {"pairs", pairs},
          {"gated_out", gated_out},
          {"failures", failures},
          {"short_candidate_lists", short_candidate_lists},
          {"failure_messages", failure_messages}};
}

ChatTranscript qg_transcript(const EventInstance& instance, int shots) {
  const FewshotBank& bank = qg_fewshot_bank();
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(shots, 0)), bank.shots.size());
  std::vector<std::pair<std::string, std::string>> used(bank.shots.begin(), bank.shots.begin() + static_cast<long>(n));
  return assemble_fewshot(bank.system, used, build_qg_prompt(instance).text);
}

ScoredCandidate score_question(const EventInstance& instance, std::string_view question,
                               const ScoringPipeline& p, const SelectionConfig& cfg) {
  const std::string recovered =
      inverse_recover(*p.ip, instance.trigger.text, question, *p.inverse_bank, p.ip_shots);
  const Answer answer = qa_answer(*p.qa, question, instance.context, *p.qa_bank, p.qa_shots);
  ScoredCandidate c = score_candidate(instance.context, recovered, instance.gold_answers, answer, cfg, *p.embedder);
  c.question = std::string(question);
  return c;
}

namespace {

struct InstanceOutcome {
  std::optional<PreferencePair> pair;
  bool failed = false;
  bool short_list = false;
  std::string message;
};

InstanceOutcome score_and_select(const EventInstance& inst, const std::vector<std::string>& candidates,
                                 const ScoringPipeline& pipeline, const SelectionConfig& cfg) {
  InstanceOutcome out;
  // Blank candidates cannot be posed; indices refer to the original list.
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (!trim(candidates[i]).empty()) kept.push_back(i);
  if (kept.empty()) {
    out.failed = true;
    out.message = inst.id + ": no candidate questions";
    return out;
  }
  std::vector<ScoredCandidate> scored;
  for (std::size_t i : kept) scored.push_back(score_question(inst, candidates[i], pipeline, cfg));
  auto sel = select_pair(scored, cfg);
  if (!sel) return out;
  const auto& c = scored[sel->chosen];
  const auto& r = scored[sel->rejected];
  sel->chosen = kept[sel->chosen];
  sel->rejected = kept[sel->rejected];
  out.pair = PreferencePair{build_qg_prompt(inst).text,
                            c.question,
                            r.question,
                            sel->gap,
                            inst.id,
                            sel->chosen,
                            sel->rejected,
                            {c.semsim, c.cor, c.score},
                            {r.semsim, r.cor, r.score}};
  return out;
}

PreferenceDataset assemble(const std::vector<InstanceOutcome>& outcomes) {
  PreferenceDataset ds;
  ds.tally.instances = outcomes.size();
  for (const auto& o : outcomes) {
    if (o.short_list) ++ds.tally.short_candidate_lists;
    if (o.failed) {
      ++ds.tally.failures;
      ds.tally.failure_messages.push_back(o.message);
    } else if (o.pair) {
      ds.pairs.push_back(*o.pair);
    } else {
      ++ds.tally.gated_out;
    }
  }
  ds.tally.pairs = ds.pairs.size();
  return ds;
}

}  // namespace

PreferenceDataset build_preference_dataset(const std::vector<EventInstance>& instances,
                                           const Backend& qg, const ScoringPipeline& pipeline,
                                           const DecodeConfig& decode, const SelectionConfig& cfg,
                                           std::size_t jobs, int qg_shots) {
  cfg.validate();
  const auto outcomes = parallel_map<InstanceOutcome>(instances.size(), jobs, [&](std::size_t i) {
    const EventInstance& inst = instances[i];
    try {
      const auto cands = qg.candidates(qg_transcript(inst, qg_shots), decode);
      InstanceOutcome o = score_and_select(inst, cands, pipeline, cfg);
      o.short_list = cands.size() < static_cast<std::size_t>(decode.num_return);
      return o;
    } catch (const Error& e) {
      return InstanceOutcome{std::nullopt, true, false, inst.id + ": " + e.what()};
    }
  });
  PreferenceDataset ds = assemble(outcomes);
  ds.config = {{"selection", cfg.to_json()}, {"decode", decode.to_json()}, {"qg", qg.identity()}};
  return ds;
}

PreferenceDataset build_preference_dataset(const std::vector<EventInstance>& instances,
                                           const std::vector<std::vector<std::string>>& candidates,
                                           const ScoringPipeline& pipeline,
                                           const SelectionConfig& cfg, std::size_t jobs) {
  cfg.validate();
  if (candidates.size() != instances.size())
    throw Error("candidate lists and instances differ in length");
  const auto outcomes = parallel_map<InstanceOutcome>(instances.size(), jobs, [&](std::size_t i) {
    try {
      return score_and_select(instances[i], candidates[i], pipeline, cfg);
    } catch (const Error& e) {
      return InstanceOutcome{std::nullopt, true, false, instances[i].id + ": " + e.what()};
    }
  });
  PreferenceDataset ds = assemble(outcomes);
  ds.config = {{"selection", cfg.to_json()}};
  return ds;
}

ordered_json pair_to_json(const PreferencePair& p) {
  auto scores = [](const CandidateScores& s) {
    return ordered_json{{"semsim", s.semsim}, {"cor", s.cor}, {"s", s.s}};
  };
  ordered_json j;
  j["prompt"] = p.prompt;
  j["chosen"] = p.chosen;
  j["rejected"] = p.rejected;
  j["gap"] = p.gap;
  j["instance_id"] = p.instance_id;
  j["scores"] = {{"chosen", scores(p.chosen_scores)}, {"rejected", scores(p.rejected_scores)}};
  j["candidate_indices"] = {p.chosen_index, p.rejected_index};
  return j;
}

PreferencePair pair_from_json(const json& doc) {
  auto scores = [](const json& s) {
    return CandidateScores{s.at("semsim").get<double>(), s.at("cor").get<double>(), s.at("s").get<double>()};
  };
  PreferencePair p;
  p.prompt = doc.at("prompt").get<std::string>();
  p.chosen = doc.at("chosen").get<std::string>();
  p.rejected = doc.at("rejected").get<std::string>();
  p.gap = doc.at("gap").get<double>();
  p.instance_id = doc.at("instance_id").get<std::string>();
  p.chosen_scores = scores(doc.at("scores").at("chosen"));
  p.rejected_scores = scores(doc.at("scores").at("rejected"));
  if (doc.contains("candidate_indices")) {
    p.chosen_index = doc.at("candidate_indices").at(0).get<std::size_t>();
    p.rejected_index = doc.at("candidate_indices").at(1).get<std::size_t>();
  }
  if (p.chosen == p.rejected) throw Error("preference pair has identical chosen and rejected questions");
  return p;
}

void save_preference_dataset(const PreferenceDataset& ds, const std::filesystem::path& path,
                             const json& extra) {
  std::string out;
  for (const auto& p : ds.pairs) {
    ordered_json j = pair_to_json(p);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    out += j.dump() + "\n";
  }
  write_text_file(path, out);
}

PreferenceDataset load_preference_dataset(const std::filesystem::path& path) {
  PreferenceDataset ds;
  for (const auto& [line, doc] : read_jsonl(path)) {
    try {
      ds.pairs.push_back(pair_from_json(doc));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  ds.tally.pairs = ds.pairs.size();
  return ds;
}

}  // namespace rlqg
