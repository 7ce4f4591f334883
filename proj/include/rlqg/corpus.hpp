#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rlqg/common.hpp"

namespace rlqg {

enum class Split { train, dev, test };
enum class Source { ace_like, rams_like, synthetic };
enum class Interrogative { who, where, what };

std::string to_string(Split s);
std::string to_string(Source s);
std::string to_string(Interrogative w);
Split parse_split(std::string_view text);
Source parse_source(std::string_view text);
Interrogative parse_interrogative(std::string_view text);

/// Surface form plus byte span [start, end) into the context.
struct TriggerSpan {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const TriggerSpan&) const = default;
};

/// One (context, trigger, role) extraction task with its gold arguments.
/// An empty `gold_answers` list marks the role as unanswerable.
struct EventInstance {
  std::string id;
  std::string context;
  TriggerSpan trigger;
  std::string event_type;
  std::string role;
  std::vector<std::string> gold_answers;
  Split split = Split::train;
  Source source = Source::synthetic;

  bool answerable() const { return !gold_answers.empty(); }
  bool operator==(const EventInstance&) const = default;
};

/// Event types with their ordered role lists, and the interrogative used for
/// each role. `contextual_templates` optionally maps event type -> role ->
/// question pattern (see prompting::render_contextual_question).
struct RoleOntology {
  std::map<std::string, std::vector<std::string>> event_types;
  std::map<std::string, Interrogative> interrogatives;
  std::map<std::string, std::map<std::string, std::string>> contextual_templates;

  bool empty() const { return event_types.empty(); }
  bool has_event_type(const std::string& type) const { return event_types.contains(type); }
  bool has_role(const std::string& type, const std::string& role) const;
  /// Throws CorpusError when the event type is unknown.
  const std::vector<std::string>& roles(const std::string& type) const;
  /// Falls back to `what` for roles without an entry.
  Interrogative interrogative(const std::string& role) const;
  std::optional<std::string> contextual_template(const std::string& type,
                                                 const std::string& role) const;

  bool operator==(const RoleOntology&) const = default;
};

struct CorpusMetadata {
  Source source = Source::synthetic;
  std::uint64_t seed = 0;
  bool operator==(const CorpusMetadata&) const = default;
};

struct Corpus {
  std::vector<EventInstance> instances;
  RoleOntology ontology;
  CorpusMetadata metadata;

  std::vector<EventInstance> split_of(Split s) const;
  bool operator==(const Corpus&) const = default;
};

/// Invalid corpus or ontology content. `line` is 0 when not file-backed.
class CorpusError : public Error {
 public:
  CorpusError(const std::string& what, std::size_t line = 0, std::string field = {},
              std::string record = {})
      : Error(what), line_(line), field_(std::move(field)), record_(std::move(record)) {}
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }
  const std::string& record() const { return record_; }

 private:
  std::size_t line_;
  std::string field_;
  std::string record_;
};

// Validation. Each throws CorpusError naming the offending record and field.
void validate_instance(const EventInstance& inst);
void validate_corpus(const Corpus& corpus);

// JSON mapping of the native formats.
ordered_json instance_to_json(const EventInstance& inst);
EventInstance instance_from_json(const json& record);
ordered_json ontology_to_json(const RoleOntology& ontology);
RoleOntology ontology_from_json(const json& doc);

RoleOntology load_ontology(const std::filesystem::path& path);
void save_ontology(const RoleOntology& ontology, const std::filesystem::path& path);

enum class CorpusFormat { native_jsonl };

/// Loads a native JSONL corpus and validates it against `ontology`. Every
/// rejected line is reported in the thrown CorpusError; an empty file yields
/// an empty corpus and a warning.
Corpus load_corpus(const std::filesystem::path& path, const RoleOntology& ontology,
                   CorpusFormat format = CorpusFormat::native_jsonl,
                   std::vector<std::string>* warnings = nullptr);

/// Writes one record per line. `extra` keys (e.g. a config hash) are appended
/// to every record; loaders ignore unknown keys.
void save_corpus(const Corpus& corpus, const std::filesystem::path& path,
                 const json& extra = json::object());

/// Expands each event mention to one instance per role of its event type.
/// Roles without an annotated argument become unanswerable instances placed
/// right after the mention's last original instance, so the answerable
/// subsequence of the output equals the answerable input.
std::vector<EventInstance> expand_full_eval(const Corpus& corpus);

/// Bundled ontology of the synthetic world (five ACE-like event types).
RoleOntology synthetic_ontology();

/// Deterministic template-composed corpus of exactly `n_instances` instances.
/// Every trigger and gold answer occurs literally in its context.
Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_instances,
                                 const RoleOntology& ontology);

// Converters from public preprocessed layouts (token-level) to the native
// schema. Token sequences are joined with single spaces; spans become byte
// offsets into that joined text.
std::vector<EventInstance> convert_dygiepp_ace(const std::filesystem::path& path, Split split,
                                               RoleOntology* ontology_out = nullptr);
std::vector<EventInstance> convert_rams(const std::filesystem::path& path, Split split,
                                        RoleOntology* ontology_out = nullptr);

}  // namespace rlqg
