#include "rlqg/prompting.hpp"

#include "rlqg/textmetrics.hpp"

namespace rlqg {

bool ChatTranscript::valid() const {
  if (turns.empty()) return false;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const Speaker expected = i % 2 == 0 ? Speaker::user : Speaker::assistant;
    if (turns[i].speaker != expected) return false;
  }
  return turns.back().speaker == Speaker::user;
}

const std::string& ChatTranscript::query() const {
  if (!valid()) throw Error("transcript must alternate user/assistant and end with a user turn");
  return turns.back().text;
}

std::string ChatTranscript::render() const {
  std::string out = "System:\n" + system + "\n";
  for (const auto& t : turns) {
    if (t.speaker == Speaker::user) out += "\nUser:\n" + t.text + "\n";
    else out += "Assistant:\n" + t.text + "\n";
  }
  return out;
}

json ChatTranscript::to_json() const {
  json messages = json::array();
  messages.push_back({{"role", "system"}, {"content", system}});
  for (const auto& t : turns)
    messages.push_back(
        {{"role", t.speaker == Speaker::user ? "user" : "assistant"}, {"content", t.text}});
  return messages;
}

std::string Answer::render() const {
  if (values.empty()) return "None";
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : " ") + v;
  return out;
}

json FewshotBank::to_json() const {
  json j;
  j["system"] = system;
  j["shots"] = json::array();
  for (const auto& [u, a] : shots) j["shots"].push_back({{"user", u}, {"assistant", a}});
  return j;
}

FewshotBank FewshotBank::from_json(const json& doc) {
  FewshotBank b;
  b.system = doc.at("system").get<std::string>();
  for (const auto& s : doc.at("shots"))
    b.shots.emplace_back(s.at("user").get<std::string>(), s.at("assistant").get<std::string>());
  return b;
}

FewshotBank FewshotBank::load(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": invalid few-shot bank: " + e.what());
  }
}

const FewshotBank& qa_fewshot_bank() {
  static const FewshotBank kBank{
      "You are a precise and concise assistant. Your task is to extract some words based "
      "directly on the provided context to answer the given questions. Please wrap your answer "
      "with the following tags: [ANS] [/ANS]. If a question has multiple correct answers within "
      "the context, list them all, separated by commas. If there is no answer in the context, "
      "just reply [ANS] None [/ANS]. Do NOT add any introductory phrases, explanations, or "
      "additional information outside of the given context.",
      {
          {"question: Who made the battle in Baghdad? context: US Secretary of Defense Donald "
           "Rumsfeld dismissed worries that there were insufficient forces in the Gulf region if "
           "the battle for Baghdad goes wrong.",
           "[ANS] US [/ANS]"},
          {"question: Who was nominated? context: Senator Christopher Dodd of Connecticut made "
           "the announcement today that he would not be the 10th candidate for the nomination.",
           "[ANS] candidate [/ANS]"},
          {"question: Who is person in former event? context: We're talking about possibilities "
           "of full scale war with former Congressman Tom Andrews, Democrat of Maine.",
           "[ANS] Tom Andrews [/ANS]"},
          {"question: Who died that cause Clinton suffered greatly? context: Clinton suffered "
           "greatly over the 19 Rangers that died, 18 on the 3rd of October and Matt Reersen (ph) "
           "three days later.",
           "[ANS] Rangers, Matt Reersen [/ANS]"},
          {"question: Where did the election takes place? context: He lost an election to a dead "
           "man.",
           "[ANS] None [/ANS]"},
      }};
  return kBank;
}

const FewshotBank& qg_fewshot_bank() {
  static const FewshotBank kBank{
      "You are a helpful assistant. Please generate a natural language question with contextual "
      "information. The question aims to help language models to extract roles from context. "
      "Generate a question based on the even trigger given.",
      {
          {"role: agent trigger: election context: He lost an * election * to a dead man.",
           "Who was the voting agent?"},
          {"role: person trigger: quit context: Media tycoon Barry Diller on Wednesday * quit * "
           "as chief of Vivendi Universal Entertainment, the entertainment unit of French giant "
           "Vivendi Universal whose future appears up for grabs.",
           "Who was quit as chief of Vivendi Universal Entertainment?"},
          {"role: vehicle trigger: landed context: Even as the secretary of homeland security was "
           "putting his people on high alert last month, a 30-foot Cuban patrol boat with four "
           "heavily armed men * landed * on American shores, utterly undetected by the Coast "
           "Guard Secretary Ridge now leads.",
           "What vehicle was used for transporting men to shores?"},
          {"role: entity trigger: Former context: NOVAK * Former * Arkansas Governor and U.S. "
           "Senator Dale Bumpers has just published a memoir called \"The Best Lawyer in a "
           "One-Lawyer Town.\" And it spans his life from the depression era to the Clinton era.",
           "Who fired Dale Bumpers?"},
          {"role: place trigger: war context: It could swell to as much as $500 billion if we go "
           "to * war * in Iraq.",
           "Where did the war take place?"},
      }};
  return kBank;
}

const FewshotBank& inverse_fewshot_bank() {
  static const FewshotBank kBank{
      "You are a helpful assistant. I'm giving you a question and an event trigger, please use "
      "them to recover the context of the event. Try your best to include as much information "
      "as possible.",
      {
          {"trigger: bankruptcy question: What organization will declare bankruptcy soon?",
           "An organization is soon to declare bankruptcy."},
          {"trigger: bankruptcy question: Where did WorldCom declare the bankruptcy?",
           "WorldCom declared bankruptcy in somewhere."},
          {"trigger: fall question: What organization was ended by iraqis?",
           "An organization was ended by Iraqis during a fall."},
          {"trigger: fallen question: Where did dictator Suharto fallen and democratic elections "
           "executed?",
           "Dicatator Suharto was fallen and democratic elections were executed somewhere."},
          {"trigger: founded question: Who started the automaker in 1937?",
           "Someone founded the automaker in 1937"},
      }};
  return kBank;
}

std::string qg_prompt_text(std::string_view role, std::string_view trigger,
                           std::string_view context) {
  std::string out = "role: ";
  out.append(role).append(" trigger: ").append(trigger).append(" context: ").append(context);
  return out;
}

PromptText build_qg_prompt(const EventInstance& instance) {
  return {qg_prompt_text(instance.role, instance.trigger.text, instance.context), PromptKind::qg,
          instance.id};
}

PromptText build_inverse_prompt(std::string_view trigger, std::string_view question,
                                std::string provenance) {
  std::string out = "trigger: ";
  out.append(trigger).append(" question: ").append(question);
  return {std::move(out), PromptKind::inverse, std::move(provenance)};
}

std::string qa_user_turn(std::string_view question, std::string_view context) {
  std::string out = "question: ";
  out.append(question).append(" context: ").append(context);
  return out;
}

TemplateStyle parse_template_style(std::string_view text) {
  if (text == "simple") return TemplateStyle::simple;
  if (text == "standard") return TemplateStyle::standard;
  throw ConfigError("unknown template style '" + std::string(text) + "'");
}

namespace {

std::string capitalized_wh(Interrogative wh) {
  switch (wh) {
    case Interrogative::who: return "Who";
    case Interrogative::where: return "Where";
    case Interrogative::what: return "What";
  }
  return "What";
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

}  // namespace

std::string render_template_question(std::string_view role, std::string_view trigger,
                                     TemplateStyle style, const RoleOntology& ontology) {
  const std::string r(role);
  if (!ontology.interrogatives.contains(r))
    throw CorpusError("role '" + r + "' has no interrogative in the ontology", 0, "role");
  std::string q = capitalized_wh(ontology.interrogative(r)) + " is the " + r;
  if (style == TemplateStyle::standard) q.append(" in the ").append(trigger).append(" event");
  return q + "?";
}

std::optional<std::string> render_contextual_question(const EventInstance& instance,
                                                      const RoleOntology& ontology) {
  auto pattern = ontology.contextual_template(instance.event_type, instance.role);
  if (!pattern || instance.gold_answers.empty()) return std::nullopt;

  std::string q = *pattern;
  const std::string& answer = instance.gold_answers.front();
  const bool needs_before = q.find("{before}") != std::string::npos;
  const bool needs_after = q.find("{after}") != std::string::npos;
  if (needs_before || needs_after) {
    const std::size_t at = instance.context.find(answer);
    if (at == std::string::npos) return std::nullopt;
    const std::size_t end = at + answer.size();
    std::string before, after;
    for (const auto& tok : tokenize_with_offsets(instance.context)) {
      if (tok.end <= at) before = instance.context.substr(tok.start, tok.end - tok.start);
      if (tok.start >= end && after.empty())
        after = instance.context.substr(tok.start, tok.end - tok.start);
    }
    if ((needs_before && before.empty()) || (needs_after && after.empty())) return std::nullopt;
    replace_all(q, "{before}", before);
    replace_all(q, "{after}", after);
  }
  replace_all(q, "{trigger}", instance.trigger.text);
  replace_all(q, "{role}", instance.role);
  if (!q.empty() && q[0] >= 'a' && q[0] <= 'z') q[0] = static_cast<char>(q[0] - 'a' + 'A');
  return q;
}

ChatTranscript assemble_fewshot(std::string system,
                                const std::vector<std::pair<std::string, std::string>>& shots,
                                std::string query) {
  ChatTranscript t;
  t.system = std::move(system);
  for (const auto& [user, assistant] : shots) {
    t.turns.push_back({Speaker::user, user});
    t.turns.push_back({Speaker::assistant, assistant});
  }
  t.turns.push_back({Speaker::user, std::move(query)});
  return t;
}

std::string wrap_answer(const std::vector<std::string>& values) {
  if (values.empty()) return "[ANS] None [/ANS]";
  std::string body;
  for (const auto& v : values) body += (body.empty() ? "" : ", ") + v;
  return "[ANS] " + body + " [/ANS]";
}

Answer parse_answer(std::string_view raw) {
  static constexpr std::string_view kOpen = "[ANS]";
  static constexpr std::string_view kClose = "[/ANS]";
  Answer a;
  a.raw = std::string(raw);

  std::string_view body;
  const std::size_t open = raw.find(kOpen);
  const std::size_t close = open == std::string_view::npos ? std::string_view::npos
                                                           : raw.find(kClose, open + kOpen.size());
  if (open != std::string_view::npos && close != std::string_view::npos) {
    body = raw.substr(open + kOpen.size(), close - open - kOpen.size());
  } else {
    a.untagged = true;
    body = raw;
    if (open != std::string_view::npos) body = raw.substr(open + kOpen.size());
    else if (const std::size_t c = raw.find(kClose); c != std::string_view::npos) body = raw.substr(0, c);
  }

  const std::string content = trim(body);
  if (to_lower_ascii(content) == "none") return a;
  for (const auto& part : split(content, ',')) {
    std::string v = trim(part);
    if (!v.empty()) a.values.push_back(std::move(v));
  }
  return a;
}

}  // namespace rlqg
