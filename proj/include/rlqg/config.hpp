#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rlqg/backends.hpp"
#include "rlqg/evalharness.hpp"
#include "rlqg/preference.hpp"
#include "rlqg/rlhf.hpp"

namespace rlqg {

struct CorpusConfig {
  std::string kind = "synthetic";  // synthetic | native | dygiepp | rams
  std::size_t instances = 300;     // synthetic only
  std::uint64_t seed = 42;         // synthetic only
  std::string path;                // native: one JSONL file holding every split
  std::string train, dev, test;    // dygiepp / rams: one file per split
  std::string ontology;            // required for native, optional otherwise
};

/// qg: toy policy; ip: rule recoverer; qa: lexical reader.
BackendConfig default_backend(std::string_view role);

struct EvalConfig {
  EvalSetting setting = EvalSetting::practical;
  std::string split = "test";
  TemplateStyle template_style = TemplateStyle::standard;
  int reward_samples = 4;  // sampled questions per prompt for the mean reward comparison
};

struct RunConfig {
  std::uint64_t seed = 42;
  std::string out = "runs/default";
  bool offline = false;
  std::size_t jobs = 1;
  bool force = false;

  CorpusConfig corpus;
  int embed = 32;
  int hidden = 48;
  std::vector<std::string> sft_mixture = {"standard", "standard", "contextual", "simple"};
  TrainConfig sft = TrainConfig::preset("toy-sft");
  TrainConfig rm = TrainConfig::preset("toy-rm");
  PpoConfig ppo;
  DecodeConfig decode;
  SelectionConfig selection;
  BackendConfig qg = default_backend("qg");
  BackendConfig ip = default_backend("ip");
  BackendConfig qa = default_backend("qa");
  BackendConfig embed_backend;  // kind "scripted" = tf-idf fitted on the corpus contexts
  EvalConfig eval;
  std::string fewshot_qa, fewshot_qg, fewshot_inverse;  // empty = built-in banks
  std::string recover_pairs;

  json to_json() const;
  /// Hash of everything that changes artifacts (out, jobs and force excluded).
  std::string hash() const;
  void validate() const;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
/// A missing stage seed inherits the run seed. Throws ConfigError.
RunConfig config_from_json(const json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Command-line overrides applied after the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool offline = false;
  bool force = false;
  std::optional<std::size_t> jobs;
};
void apply_overrides(RunConfig& cfg, const ConfigOverrides& o);

}  // namespace rlqg
