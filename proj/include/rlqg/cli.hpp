#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rlqg/config.hpp"

namespace rlqg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;    // config parse or validation error, or a stage failure
inline constexpr int kExitArtifact = 2;  // missing prerequisite or config-hash mismatch

/// Stage names in pipeline order (e2e runs them in this order).
const std::vector<std::string>& subcommand_names();

/// Input for `ask`: either a question to answer directly, or a role,
/// trigger and context from which the trained policy writes the question.
struct AskRequest {
  std::string question;
  std::string role;
  std::string trigger;
  std::string context;
  std::string policy = "rl";  // rl | sft
};

/// Runs one stage against the output directory. Errors are reported on `err`
/// and mapped to exit codes; nothing is thrown.
int run_subcommand(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err,
                   const AskRequest& ask = {});

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kCorpus = "corpus.jsonl";
inline constexpr const char* kOntology = "ontology.json";
inline constexpr const char* kSftPolicy = "sft_policy.json";
inline constexpr const char* kSftLog = "sft_log.json";
inline constexpr const char* kCandidates = "candidates.jsonl";
inline constexpr const char* kPreferences = "preferences.jsonl";
inline constexpr const char* kPreferenceSummary = "preferences_summary.json";
inline constexpr const char* kRewardModel = "reward_model.json";
inline constexpr const char* kRmLog = "rm_log.json";
inline constexpr const char* kRlPolicy = "rl_policy.json";
inline constexpr const char* kPpoLog = "ppo_log.jsonl";
inline constexpr const char* kEvalDir = "eval";
}  // namespace artifact

}  // namespace rlqg
