#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "rlqg/corpus.hpp"
#include "rlqg/prompting.hpp"
#include "rlqg/textmetrics.hpp"
#include "rlqg/toymodel.hpp"

namespace rlqg {

enum class BackendKind { toy, remote, scripted };
std::string to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view text);

/// How a scripted backend answers: a fixed response table, the lexical
/// reader (QA over annotated corpus contexts) or the rule-based recoverer
/// (inverse prompting).
enum class ScriptedMode { table, reader, recoverer };
std::string to_string(ScriptedMode m);
ScriptedMode parse_scripted_mode(std::string_view text);

struct BackendConfig {
  BackendKind kind = BackendKind::scripted;
  ScriptedMode scripted = ScriptedMode::table;
  std::map<std::string, std::string> table;  // scripted table entries
  std::string table_path;                    // optional JSON object file merged into `table`

  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string model;
  std::string embedding_model;
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.6;
  double top_p = 0.9;
  int max_tokens = 4096;
  double timeout_seconds = 60.0;
  int retries = 3;
  double retry_backoff_seconds = 0.5;
  int max_in_flight = 4;
  std::string cassette_path;
  bool offline = false;

  std::string checkpoint;  // toy: policy checkpoint path
  bool greedy = true;      // toy: greedy vs sampled decoding for generate()
  int shots = 5;           // few-shot examples used by qa_answer / inverse_recover

  void validate() const;
  json to_json() const;
  static BackendConfig from_json(const json& doc);
};

enum class FinishReason { stop, length, error };
std::string to_string(FinishReason f);

struct GenerationResult {
  std::string text;
  FinishReason finish = FinishReason::stop;
  double latency_ms = 0.0;
  int attempts = 0;
  std::string diagnostic;  // set when finish == error

  bool ok() const { return finish != FinishReason::error; }
};

class BackendError : public Error {
 public:
  using Error::Error;
};

/// A generation service. Implementations are immutable after construction
/// and safe to call from several threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationResult generate(const ChatTranscript& transcript) const = 0;
  /// Several candidate outputs for the transcript. The default returns the
  /// single generate() result. Throws BackendError on failure.
  virtual std::vector<std::string> candidates(const ChatTranscript& transcript,
                                              const DecodeConfig& decode) const;
  /// Stable description used in artifact provenance.
  virtual std::string identity() const = 0;
};

/// Exact-match lookup of the final user turn. A miss is an error result.
class ScriptedTableBackend final : public Backend {
 public:
  explicit ScriptedTableBackend(std::map<std::string, std::string> table);
  GenerationResult generate(const ChatTranscript& transcript) const override;
  std::string identity() const override;

 private:
  std::map<std::string, std::string> table_;
};

/// Deterministic extractive QA over contexts whose annotations are known.
/// Parses "question: {q} context: {c}". Candidates are annotated fillers of
/// the context whose role interrogative agrees with the question's WH word.
/// Each candidate is scored by how many question words appear right next to
/// it in the context (stopwords, trigger words and the filler itself do not
/// count). The best score wins; a zero or tied best falls back to the first
/// candidate in context order. No candidate gives None.
class LexicalReaderBackend final : public Backend {
 public:
  explicit LexicalReaderBackend(const Corpus& corpus);
  GenerationResult generate(const ChatTranscript& transcript) const override;
  std::string identity() const override;

  /// The reader's answer (empty = None) for a question about a context.
  std::vector<std::string> answer(std::string_view question, std::string_view context) const;

 private:
  struct Filler {
    std::string text;
    Interrogative wh;
    std::size_t first_token, end_token;  // token range of the first occurrence
  };
  struct Annotated {
    std::vector<std::string> tokens;
    std::vector<Filler> fillers;  // context order
    std::vector<bool> trigger_token;
  };
  std::map<std::string, Annotated, std::less<>> contexts_;
  std::string identity_;
};

/// Rule-based context recovery from "trigger: {t} question: {q}". Known
/// user turns (few-shot bank shots and extra pairs) are answered verbatim;
/// otherwise the question is rewritten as a declarative sentence by WH-slot
/// substitution ("Who was hired as X?" -> "Someone was hired as X.").
class RuleRecovererBackend final : public Backend {
 public:
  explicit RuleRecovererBackend(std::map<std::string, std::string> known = {});
  GenerationResult generate(const ChatTranscript& transcript) const override;
  std::string identity() const override;

 private:
  std::map<std::string, std::string> known_;
};

/// Declarative rewrite used by RuleRecovererBackend.
std::string rule_recover(std::string_view question);

/// Decodes the final user turn with an in-process policy.
class ToyBackend final : public Backend {
 public:
  ToyBackend(std::shared_ptr<const Policy> policy, DecodeConfig decode, bool greedy);
  GenerationResult generate(const ChatTranscript& transcript) const override;
  /// Beam search: the decode config's num_return best completed sequences.
  std::vector<std::string> candidates(const ChatTranscript& transcript,
                                      const DecodeConfig& decode) const override;
  std::string identity() const override;

 private:
  std::shared_ptr<const Policy> policy_;
  DecodeConfig decode_;
  bool greedy_;
};

/// OpenAI-compatible chat completions over HTTP with retries and a
/// replayable cassette. In offline mode only cassette hits are served.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendConfig cfg);
  ~RemoteBackend() override;
  GenerationResult generate(const ChatTranscript& transcript) const override;
  std::vector<std::string> candidates(const ChatTranscript& transcript,
                                      const DecodeConfig& decode) const override;
  std::string identity() const override;

  /// Request body sent for a transcript (also the cassette key input).
  json request_body(const ChatTranscript& transcript, int n = 1) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Embedder backed by an OpenAI-compatible /embeddings endpoint. The first
/// call fixes the dimension; a later response of another size is an error.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(BackendConfig cfg);
  ~RemoteEmbedder() override;
  Eigen::VectorXd embed(std::string_view text) const override;
  Eigen::Index dimension() const override;
  std::string identity() const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Resources a backend may need besides its config.
struct BackendContext {
  const Corpus* corpus = nullptr;                // reader
  std::shared_ptr<const Policy> policy;          // toy (else loaded from cfg.checkpoint)
  std::map<std::string, std::string> recover_pairs;  // recoverer extras
  DecodeConfig decode;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const BackendContext& ctx = {});

/// QA with the [ANS] protocol: the QA bank's system prompt, its first
/// `shots` examples and the "question: {q} context: {c}" turn. Throws
/// BackendError when generation fails; untagged output is flagged only.
Answer qa_answer(const Backend& backend, std::string_view question, std::string_view context,
                 const FewshotBank& bank, int shots = 5);
ChatTranscript qa_transcript(std::string_view question, std::string_view context,
                             const FewshotBank& bank, int shots = 5);

/// Context recovery from a question and trigger via the inverse bank.
std::string inverse_recover(const Backend& backend, std::string_view trigger,
                            std::string_view question, const FewshotBank& bank, int shots = 5);

/// Single embedding call (no dimension tracking). Empty text is rejected
/// before any network access.
Eigen::VectorXd embed_remote(const BackendConfig& cfg, std::string_view text);

/// Bundled question -> recovered-context pairs (JSON list of
/// {"trigger","question","context"}), keyed by inverse user turn.
std::map<std::string, std::string> load_recover_pairs(const std::filesystem::path& path);

}  // namespace rlqg
