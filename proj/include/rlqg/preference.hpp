#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlqg/backends.hpp"

namespace rlqg {

struct SelectionConfig {
  double lambda1 = 0.3;  // SemSim weight
  double lambda2 = 0.7;  // COR weight
  double alpha = 0.65;   // best score must exceed this
  double beta = 0.5;     // best - worst must exceed this

  void validate() const;
  json to_json() const;
  static SelectionConfig from_json(const json& doc);
};

/// lambda1 * semsim + lambda2 * cor
double combined_score(double semsim, double cor, const SelectionConfig& cfg);

struct ScoredCandidate {
  std::string question;
  std::string recovered;  // recovered context
  Answer answer;
  double semsim = 0.0;
  double cor = 0.0;
  double score = 0.0;  // lambda1 * semsim + lambda2 * cor
  bool semsim_degenerate = false;
};

/// Combined score of one candidate: SemSim between the original and the
/// recovered context, COR between gold and predicted answers.
ScoredCandidate score_candidate(std::string_view context, std::string_view recovered,
                                const std::vector<std::string>& golds, const Answer& answer,
                                const SelectionConfig& cfg, const Embedder& embedder);

struct Selection {
  std::size_t chosen = 0;    // argmax (lowest index on ties)
  std::size_t rejected = 0;  // argmin (lowest index on ties)
  double gap = 0.0;
};

/// The (argmax, argmin) pair when max > alpha and max - min > beta.
std::optional<Selection> select_pair(const std::vector<double>& scores, const SelectionConfig& cfg);
std::optional<Selection> select_pair(const std::vector<ScoredCandidate>& scored,
                                     const SelectionConfig& cfg);

struct CandidateScores {
  double semsim = 0.0;
  double cor = 0.0;
  double s = 0.0;
  bool operator==(const CandidateScores&) const = default;
};

struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double gap = 0.0;
  std::string instance_id;
  std::size_t chosen_index = 0;
  std::size_t rejected_index = 0;
  CandidateScores chosen_scores;
  CandidateScores rejected_scores;
  bool operator==(const PreferencePair&) const = default;
};

struct BuildTally {
  std::size_t instances = 0;
  std::size_t pairs = 0;
  std::size_t gated_out = 0;
  std::size_t failures = 0;
  std::size_t short_candidate_lists = 0;
  std::vector<std::string> failure_messages;  // "instance id: reason"
  json to_json() const;
};

struct PreferenceDataset {
  std::vector<PreferencePair> pairs;
  json config;  // creation snapshot
  BuildTally tally;
};

/// Backends and banks used to score questions.
struct ScoringPipeline {
  const Backend* ip = nullptr;  // inverse prompting (context recovery)
  const Backend* qa = nullptr;
  const Embedder* embedder = nullptr;
  const FewshotBank* inverse_bank = nullptr;
  const FewshotBank* qa_bank = nullptr;
  int ip_shots = 5;
  int qa_shots = 5;
};

/// Recovers a context and an answer for `question` and scores it. Throws
/// BackendError when a backend fails.
ScoredCandidate score_question(const EventInstance& instance, std::string_view question,
                               const ScoringPipeline& pipeline, const SelectionConfig& cfg);

/// Candidate questions for every instance, then scoring, gating and pair
/// extraction. At most one pair per instance; output in input order.
/// Blank candidates are dropped before scoring. Backend failures skip the
/// instance and are tallied.
PreferenceDataset build_preference_dataset(const std::vector<EventInstance>& instances,
                                           const Backend& qg, const ScoringPipeline& pipeline,
                                           const DecodeConfig& decode, const SelectionConfig& cfg,
                                           std::size_t jobs = 1, int qg_shots = 0);

/// Same, from precomputed candidate lists (one per instance, same order).
PreferenceDataset build_preference_dataset(const std::vector<EventInstance>& instances,
                                           const std::vector<std::vector<std::string>>& candidates,
                                           const ScoringPipeline& pipeline,
                                           const SelectionConfig& cfg, std::size_t jobs = 1);

/// The QG transcript: QG bank system prompt, first `shots` examples and the
/// "role: ... trigger: ... context: ..." turn.
ChatTranscript qg_transcript(const EventInstance& instance, int shots);

ordered_json pair_to_json(const PreferencePair& pair);
PreferencePair pair_from_json(const json& doc);
/// One pair per line; `extra` keys are added to every line.
void save_preference_dataset(const PreferenceDataset& ds, const std::filesystem::path& path,
                             const json& extra = json::object());
PreferenceDataset load_preference_dataset(const std::filesystem::path& path);

}  // namespace rlqg
