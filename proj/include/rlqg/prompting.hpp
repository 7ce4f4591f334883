#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rlqg/corpus.hpp"

namespace rlqg {

enum class PromptKind { qg, inverse, qa };

struct PromptText {
  std::string text;
  PromptKind kind = PromptKind::qg;
  std::string provenance;  // instance id
  bool operator==(const PromptText&) const = default;
};

enum class Speaker { user, assistant };

struct ChatTurn {
  Speaker speaker = Speaker::user;
  std::string text;
  bool operator==(const ChatTurn&) const = default;
};

/// System prompt plus alternating user/assistant turns ending in a user turn.
struct ChatTranscript {
  std::string system;
  std::vector<ChatTurn> turns;

  bool valid() const;
  /// The final user turn. Throws on an invalid transcript.
  const std::string& query() const;
  /// Plain-text layout: a "System:" block, then "User:"/"Assistant:" blocks.
  std::string render() const;
  json to_json() const;
  bool operator==(const ChatTranscript&) const = default;
};

/// Parsed QA output. Empty `values` is the explicit None answer.
struct Answer {
  std::vector<std::string> values;
  std::string raw;
  bool untagged = false;  // no [ANS]...[/ANS] block in the raw output

  bool none() const { return values.empty(); }
  /// Values joined by single spaces; "None" when empty.
  std::string render() const;
};

/// Few-shot examples: a system prompt and (user, assistant) pairs.
struct FewshotBank {
  std::string system;
  std::vector<std::pair<std::string, std::string>> shots;

  json to_json() const;
  static FewshotBank from_json(const json& doc);
  static FewshotBank load(const std::filesystem::path& path);
  bool operator==(const FewshotBank&) const = default;
};

/// Question-answering bank (five shots, [ANS]-tag protocol).
const FewshotBank& qa_fewshot_bank();
/// Question-generation bank (five shots).
const FewshotBank& qg_fewshot_bank();
/// Inverse-prompting (context recovery) bank (five shots).
const FewshotBank& inverse_fewshot_bank();

/// "role: {role} trigger: {trigger} context: {context}"
std::string qg_prompt_text(std::string_view role, std::string_view trigger,
                           std::string_view context);
PromptText build_qg_prompt(const EventInstance& instance);

/// "trigger: {trigger} question: {question}"
PromptText build_inverse_prompt(std::string_view trigger, std::string_view question,
                                std::string provenance = {});

/// "question: {question} context: {context}"
std::string qa_user_turn(std::string_view question, std::string_view context);

enum class TemplateStyle { simple, standard };
TemplateStyle parse_template_style(std::string_view text);

/// simple:   "{WH} is the {role}?"
/// standard: "{WH} is the {role} in the {trigger} event?"
/// Throws CorpusError when `role` is not in the ontology.
std::string render_template_question(std::string_view role, std::string_view trigger,
                                     TemplateStyle style, const RoleOntology& ontology);

/// Fills the ontology's contextual pattern for the instance's (event type,
/// role). Slots: {trigger}, {role}, {before}/{after} (the context words
/// adjacent to the first gold answer). nullopt when no pattern applies.
std::optional<std::string> render_contextual_question(const EventInstance& instance,
                                                      const RoleOntology& ontology);

ChatTranscript assemble_fewshot(std::string system,
                                const std::vector<std::pair<std::string, std::string>>& shots,
                                std::string query);

/// "[ANS] a, b [/ANS]", or "[ANS] None [/ANS]" for no values.
std::string wrap_answer(const std::vector<std::string>& values);

/// Reads the first [ANS]...[/ANS] block. Without tags the trimmed raw text is
/// parsed instead and the answer is flagged untagged.
Answer parse_answer(std::string_view raw);

}  // namespace rlqg
