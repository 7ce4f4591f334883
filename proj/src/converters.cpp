#include <algorithm>
#include <map>
#include <regex>

#include "rlqg/corpus.hpp"

namespace rlqg {

namespace {

// Joined text plus the byte offset of every token.
struct JoinedTokens {
  std::string text;
  std::vector<std::size_t> start;
  std::vector<std::size_t> end;

  void add(const std::string& tok) {
    if (!text.empty()) text += ' ';
    start.push_back(text.size());
    text += tok;
    end.push_back(text.size());
  }
  // Inclusive token range [first, last].
  std::string span(std::size_t first, std::size_t last) const {
    return text.substr(start.at(first), end.at(last) - start.at(first));
  }
};

Interrogative guess_interrogative(const std::string& role) {
  static const std::map<std::string, Interrogative> kKnown = {
      {"adjudicator", Interrogative::who}, {"agent", Interrogative::who},
      {"attacker", Interrogative::who},    {"beneficiary", Interrogative::who},
      {"buyer", Interrogative::who},       {"defendant", Interrogative::who},
      {"entity", Interrogative::who},      {"giver", Interrogative::who},
      {"killer", Interrogative::who},      {"org", Interrogative::who},
      {"person", Interrogative::who},      {"plaintiff", Interrogative::who},
      {"prosecutor", Interrogative::who},  {"recipient", Interrogative::who},
      {"seller", Interrogative::who},      {"target", Interrogative::who},
      {"victim", Interrogative::who},      {"communicator", Interrogative::who},
      {"participant", Interrogative::who}, {"passenger", Interrogative::who},
      {"place", Interrogative::where},     {"origin", Interrogative::where},
      {"destination", Interrogative::where},
  };
  auto it = kKnown.find(role);
  return it == kKnown.end() ? Interrogative::what : it->second;
}

void note_role(RoleOntology* onto, const std::string& type, const std::string& role) {
  if (!onto) return;
  auto& roles = onto->event_types[type];
  if (std::find(roles.begin(), roles.end(), role) == roles.end()) roles.push_back(role);
  onto->interrogatives.try_emplace(role, guess_interrogative(role));
}

void note_type(RoleOntology* onto, const std::string& type) {
  if (onto) onto->event_types.try_emplace(type);
}

struct PendingMention {
  TriggerSpan trigger;
  std::string type;
  std::string context;
  std::string key;
  // Ordered by first appearance of the role.
  std::vector<std::pair<std::string, std::vector<std::string>>> args;

  void add(const std::string& role, std::string text) {
    for (auto& [r, values] : args)
      if (r == role) {
        if (std::find(values.begin(), values.end(), text) == values.end())
          values.push_back(std::move(text));
        return;
      }
    args.emplace_back(role, std::vector<std::string>{std::move(text)});
  }

  void emit(std::vector<EventInstance>& out, Split split, Source source) const {
    for (const auto& [role, values] : args) {
      EventInstance inst;
      inst.id = key + "-" + role;
      inst.context = context;
      inst.trigger = trigger;
      inst.event_type = type;
      inst.role = role;
      inst.gold_answers = values;
      inst.split = split;
      inst.source = source;
      validate_instance(inst);
      out.push_back(std::move(inst));
    }
  }
};

template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
  for (const auto& [line, record] : read_jsonl(path)) {
    try {
      fn(record, line);
    } catch (const json::exception& e) {
      throw CorpusError(path.string() + ":" + std::to_string(line) + ": " + e.what(), line, "",
                        record.value("doc_key", ""));
    }
  }
}

std::string lower(std::string s) { return to_lower_ascii(s); }

}  // namespace

// DyGIE++ layout: {"doc_key", "sentences": [[tok...]...], "events": per sentence
// a list of events [[trigger_tok, type], [arg_start, arg_end, role]...]}.
// Token indices are document-level; each sentence becomes one context.
std::vector<EventInstance> convert_dygiepp_ace(const std::filesystem::path& path, Split split,
                                               RoleOntology* ontology_out) {
  std::vector<EventInstance> out;
  for_each_record(path, [&](const json& doc, std::size_t line) {
    const std::string doc_key = doc.at("doc_key").get<std::string>();
    const auto& sentences = doc.at("sentences");
    const json events = doc.value("events", json::array());
    std::size_t offset = 0;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      JoinedTokens joined;
      for (const auto& tok : sentences[s]) joined.add(tok.get<std::string>());
      const std::size_t n = sentences[s].size();
      auto local = [&](std::size_t doc_index, const char* field) {
        if (doc_index < offset || doc_index >= offset + n)
          throw CorpusError(path.string() + ":" + std::to_string(line) + ": token index out of sentence",
                            line, field, doc_key);
        return doc_index - offset;
      };
      if (s < events.size()) {
        for (std::size_t e = 0; e < events[s].size(); ++e) {
          const auto& ev = events[s][e];
          const std::size_t t = local(ev.at(0).at(0).get<std::size_t>(), "trigger");
          PendingMention m;
          m.type = ev.at(0).at(1).get<std::string>();
          m.context = joined.text;
          m.trigger = {joined.span(t, t), joined.start[t], joined.end[t]};
          m.key = doc_key + "-s" + std::to_string(s) + "-e" + std::to_string(e);
          note_type(ontology_out, m.type);
          for (std::size_t a = 1; a < ev.size(); ++a) {
            const std::size_t first = local(ev[a].at(0).get<std::size_t>(), "argument");
            const std::size_t last = local(ev[a].at(1).get<std::size_t>(), "argument");
            const std::string role = lower(ev[a].at(2).get<std::string>());
            note_role(ontology_out, m.type, role);
            m.add(role, joined.span(first, last));
          }
          m.emit(out, split, Source::ace_like);
        }
      }
      offset += n;
    }
  });
  return out;
}

// RAMS layout: {"doc_key", "sentences", "evt_triggers": [[start, end, [[type, p]]]],
// "gold_evt_links": [[[ts, te], [as, ae], "evtNNNargNNrole"]]}. The whole
// (flattened) document is the context; role names drop the "evtNNNargNN" prefix.
std::vector<EventInstance> convert_rams(const std::filesystem::path& path, Split split,
                                        RoleOntology* ontology_out) {
  static const std::regex kRolePrefix("^evt\\d+arg\\d+");
  std::vector<EventInstance> out;
  for_each_record(path, [&](const json& doc, std::size_t) {
    const std::string doc_key = doc.at("doc_key").get<std::string>();
    JoinedTokens joined;
    for (const auto& sentence : doc.at("sentences"))
      for (const auto& tok : sentence) joined.add(tok.get<std::string>());

    std::vector<PendingMention> mentions;
    for (const auto& trig : doc.at("evt_triggers")) {
      const auto ts = trig.at(0).get<std::size_t>();
      const auto te = trig.at(1).get<std::size_t>();
      PendingMention m;
      m.type = trig.at(2).at(0).at(0).get<std::string>();
      m.context = joined.text;
      m.trigger = {joined.span(ts, te), joined.start.at(ts), joined.end.at(te)};
      m.key = doc_key + "-e" + std::to_string(mentions.size());
      note_type(ontology_out, m.type);
      mentions.push_back(std::move(m));
    }
    for (const auto& link : doc.value("gold_evt_links", json::array())) {
      const auto ts = link.at(0).at(0).get<std::size_t>();
      const auto te = link.at(0).at(1).get<std::size_t>();
      auto it = std::find_if(mentions.begin(), mentions.end(), [&](const PendingMention& m) {
        return m.trigger.start == joined.start.at(ts) && m.trigger.end == joined.end.at(te);
      });
      if (it == mentions.end()) continue;
      const std::string role =
          lower(std::regex_replace(link.at(2).get<std::string>(), kRolePrefix, ""));
      note_role(ontology_out, it->type, role);
      it->add(role, joined.span(link.at(1).at(0).get<std::size_t>(),
                                link.at(1).at(1).get<std::size_t>()));
    }
    for (const auto& m : mentions) m.emit(out, split, Source::rams_like);
  });
  return out;
}

}  // namespace rlqg
