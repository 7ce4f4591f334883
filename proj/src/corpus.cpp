#include "rlqg/corpus.hpp"

#include <set>
#include <tuple>

namespace rlqg {

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

std::string to_string(Source s) {
  switch (s) {
    case Source::ace_like: return "ace-like";
    case Source::rams_like: return "rams-like";
    case Source::synthetic: return "synthetic";
  }
  return "synthetic";
}

std::string to_string(Interrogative w) {
  switch (w) {
    case Interrogative::who: return "who";
    case Interrogative::where: return "where";
    case Interrogative::what: return "what";
  }
  return "what";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "dev") return Split::dev;
  if (text == "test") return Split::test;
  throw CorpusError("unknown split '" + std::string(text) + "'", 0, "split");
}

Source parse_source(std::string_view text) {
  if (text == "ace-like") return Source::ace_like;
  if (text == "rams-like") return Source::rams_like;
  if (text == "synthetic") return Source::synthetic;
  throw CorpusError("unknown source '" + std::string(text) + "'", 0, "source");
}

Interrogative parse_interrogative(std::string_view text) {
  const std::string lower = to_lower_ascii(text);
  if (lower == "who") return Interrogative::who;
  if (lower == "where") return Interrogative::where;
  if (lower == "what") return Interrogative::what;
  throw CorpusError("unknown interrogative '" + std::string(text) + "'", 0, "interrogatives");
}

bool RoleOntology::has_role(const std::string& type, const std::string& role) const {
  auto it = event_types.find(type);
  if (it == event_types.end()) return false;
  for (const auto& r : it->second)
    if (r == role) return true;
  return false;
}

const std::vector<std::string>& RoleOntology::roles(const std::string& type) const {
  auto it = event_types.find(type);
  if (it == event_types.end())
    throw CorpusError("event type '" + type + "' is not in the ontology", 0, "event_type");
  return it->second;
}

Interrogative RoleOntology::interrogative(const std::string& role) const {
  auto it = interrogatives.find(role);
  return it == interrogatives.end() ? Interrogative::what : it->second;
}

std::optional<std::string> RoleOntology::contextual_template(const std::string& type,
                                                             const std::string& role) const {
  auto t = contextual_templates.find(type);
  if (t == contextual_templates.end()) return std::nullopt;
  auto r = t->second.find(role);
  if (r == t->second.end()) return std::nullopt;
  return r->second;
}

std::vector<EventInstance> Corpus::split_of(Split s) const {
  std::vector<EventInstance> out;
  for (const auto& inst : instances)
    if (inst.split == s) out.push_back(inst);
  return out;
}

void validate_instance(const EventInstance& inst) {
  auto fail = [&](const std::string& field, const std::string& msg) {
    throw CorpusError("record '" + inst.id + "': " + field + ": " + msg, 0, field, inst.id);
  };
  if (inst.id.empty()) fail("id", "empty id");
  if (inst.context.empty()) fail("context", "empty context");
  if (inst.role.empty()) fail("role", "empty role");
  if (inst.event_type.empty()) fail("event_type", "empty event type");
  const auto& t = inst.trigger;
  if (t.text.empty()) fail("trigger.text", "empty trigger");
  if (t.start >= t.end || t.end > inst.context.size())
    fail("trigger", "span [" + std::to_string(t.start) + "," + std::to_string(t.end) +
                        ") outside context of length " + std::to_string(inst.context.size()));
  if (inst.context.compare(t.start, t.end - t.start, t.text) != 0)
    fail("trigger", "span text '" + inst.context.substr(t.start, t.end - t.start) +
                        "' does not equal trigger '" + t.text + "'");
  std::set<std::string> seen;
  for (const auto& a : inst.gold_answers) {
    if (a.empty()) fail("gold_answers", "empty answer string");
    if (!seen.insert(a).second) fail("gold_answers", "duplicate answer '" + a + "'");
  }
}

void validate_corpus(const Corpus& corpus) {
  std::set<std::string> ids;
  for (const auto& inst : corpus.instances) {
    validate_instance(inst);
    if (!ids.insert(inst.id).second)
      throw CorpusError("duplicate id '" + inst.id + "'", 0, "id", inst.id);
    if (!corpus.ontology.has_role(inst.event_type, inst.role))
      throw CorpusError("record '" + inst.id + "': role '" + inst.role +
                            "' not listed under event type '" + inst.event_type + "'",
                        0, "role", inst.id);
  }
}

ordered_json instance_to_json(const EventInstance& inst) {
  ordered_json j;
  j["id"] = inst.id;
  j["context"] = inst.context;
  j["trigger"] = {{"text", inst.trigger.text},
                  {"start", inst.trigger.start},
                  {"end", inst.trigger.end}};
  j["event_type"] = inst.event_type;
  j["role"] = inst.role;
  j["gold_answers"] = inst.gold_answers;
  j["split"] = to_string(inst.split);
  j["source"] = to_string(inst.source);
  return j;
}

namespace {

const json& require(const json& obj, const char* field, json::value_t type,
                    const std::string& prefix = {}) {
  const std::string name = prefix + field;
  if (!obj.is_object() || !obj.contains(field))
    throw CorpusError("missing field '" + name + "'", 0, name);
  const json& v = obj.at(field);
  const bool ok = type == json::value_t::number_unsigned
                      ? v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)
                      : v.type() == type;
  if (!ok) throw CorpusError("field '" + name + "' has the wrong type", 0, name);
  return v;
}

}  // namespace

EventInstance instance_from_json(const json& record) {
  if (!record.is_object()) throw CorpusError("record is not a JSON object", 0, "record");
  EventInstance inst;
  inst.id = require(record, "id", json::value_t::string).get<std::string>();
  try {
    inst.context = require(record, "context", json::value_t::string).get<std::string>();
    const json& trig = require(record, "trigger", json::value_t::object);
    inst.trigger.text = require(trig, "text", json::value_t::string, "trigger.").get<std::string>();
    inst.trigger.start =
        require(trig, "start", json::value_t::number_unsigned, "trigger.").get<std::size_t>();
    inst.trigger.end =
        require(trig, "end", json::value_t::number_unsigned, "trigger.").get<std::size_t>();
    inst.event_type = require(record, "event_type", json::value_t::string).get<std::string>();
    inst.role = require(record, "role", json::value_t::string).get<std::string>();
    const json& golds = require(record, "gold_answers", json::value_t::array);
    for (const auto& g : golds) {
      if (!g.is_string()) throw CorpusError("gold answer is not a string", 0, "gold_answers");
      inst.gold_answers.push_back(g.get<std::string>());
    }
    inst.split = parse_split(require(record, "split", json::value_t::string).get<std::string>());
    inst.source = parse_source(require(record, "source", json::value_t::string).get<std::string>());
  } catch (const CorpusError& e) {
    throw CorpusError("record '" + inst.id + "': " + e.what(), 0, e.field(), inst.id);
  }
  validate_instance(inst);
  return inst;
}

ordered_json ontology_to_json(const RoleOntology& ontology) {
  ordered_json j;
  j["event_types"] = ordered_json::object();
  for (const auto& [type, roles] : ontology.event_types) j["event_types"][type] = roles;
  j["interrogatives"] = ordered_json::object();
  for (const auto& [role, wh] : ontology.interrogatives) j["interrogatives"][role] = to_string(wh);
  if (!ontology.contextual_templates.empty()) {
    j["contextual_templates"] = ordered_json::object();
    for (const auto& [type, by_role] : ontology.contextual_templates)
      for (const auto& [role, pattern] : by_role) j["contextual_templates"][type][role] = pattern;
  }
  return j;
}

RoleOntology ontology_from_json(const json& doc) {
  RoleOntology o;
  const json& types = require(doc, "event_types", json::value_t::object);
  for (const auto& [type, roles] : types.items()) {
    if (!roles.is_array()) throw CorpusError("roles of '" + type + "' must be a list", 0, "event_types");
    std::set<std::string> seen;
    for (const auto& r : roles) {
      if (!r.is_string() || r.get<std::string>().empty())
        throw CorpusError("role names of '" + type + "' must be non-empty strings", 0, "event_types");
      if (!seen.insert(r.get<std::string>()).second)
        throw CorpusError("duplicate role '" + r.get<std::string>() + "' in '" + type + "'", 0,
                          "event_types");
      o.event_types[type].push_back(r.get<std::string>());
    }
  }
  if (doc.contains("interrogatives")) {
    for (const auto& [role, wh] : doc.at("interrogatives").items())
      o.interrogatives[role] = parse_interrogative(wh.get<std::string>());
  }
  // Unmapped roles default to "what" so every role has a category.
  for (const auto& [type, roles] : o.event_types)
    for (const auto& r : roles) o.interrogatives.try_emplace(r, Interrogative::what);
  if (doc.contains("contextual_templates")) {
    for (const auto& [type, by_role] : doc.at("contextual_templates").items())
      for (const auto& [role, pattern] : by_role.items())
        o.contextual_templates[type][role] = pattern.get<std::string>();
  }
  return o;
}

RoleOntology load_ontology(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw CorpusError(path.string() + ": invalid JSON: " + e.what());
  }
  return ontology_from_json(doc);
}

void save_ontology(const RoleOntology& ontology, const std::filesystem::path& path) {
  write_text_file(path, ontology_to_json(ontology).dump(2) + "\n");
}

Corpus load_corpus(const std::filesystem::path& path, const RoleOntology& ontology,
                   CorpusFormat format, std::vector<std::string>* warnings) {
  if (format != CorpusFormat::native_jsonl) throw CorpusError("unsupported corpus format");
  if (!std::filesystem::exists(path)) throw CorpusError("corpus file not found: " + path.string());

  Corpus corpus;
  corpus.ontology = ontology;
  corpus.metadata.source = Source::synthetic;

  std::vector<std::pair<std::size_t, json>> rows;
  try {
    rows = read_jsonl(path);
  } catch (const Error& e) {
    throw CorpusError(e.what());
  }
  if (rows.empty()) {
    if (warnings) warnings->push_back(path.string() + ": empty corpus");
    return corpus;
  }

  std::string report;
  std::size_t first_line = 0;
  std::string first_field, first_record;
  auto reject = [&](std::size_t line, const CorpusError& e) {
    if (first_line == 0) {
      first_line = line;
      first_field = e.field();
      first_record = e.record();
    }
    report += "\n  line " + std::to_string(line) + ": " + e.what();
  };

  std::set<std::string> ids;
  std::set<Source> sources;
  for (const auto& [line, record] : rows) {
    try {
      EventInstance inst = instance_from_json(record);
      if (!ids.insert(inst.id).second)
        throw CorpusError("duplicate id '" + inst.id + "'", 0, "id", inst.id);
      if (!ontology.has_role(inst.event_type, inst.role))
        throw CorpusError("record '" + inst.id + "': role '" + inst.role +
                              "' is not listed under event type '" + inst.event_type + "'",
                          0, "role", inst.id);
      sources.insert(inst.source);
      corpus.instances.push_back(std::move(inst));
    } catch (const CorpusError& e) {
      reject(line, e);
    }
  }
  if (first_line != 0)
    throw CorpusError(path.string() + ": rejected records:" + report, first_line, first_field,
                      first_record);
  if (sources.size() == 1) corpus.metadata.source = *sources.begin();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path, const json& extra) {
  std::string out;
  for (const auto& inst : corpus.instances) {
    ordered_json j = instance_to_json(inst);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    out += j.dump();
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<EventInstance> expand_full_eval(const Corpus& corpus) {
  using MentionKey = std::tuple<std::string, std::size_t, std::size_t, std::string>;
  struct Mention {
    std::size_t last_index = 0;
    std::string base_id;
    std::set<std::string> listed;
  };
  std::map<MentionKey, Mention> mentions;
  std::vector<MentionKey> key_of(corpus.instances.size());

  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& inst = corpus.instances[i];
    corpus.ontology.roles(inst.event_type);  // throws for unknown types
    MentionKey key{inst.context, inst.trigger.start, inst.trigger.end, inst.event_type};
    auto [it, fresh] = mentions.try_emplace(key);
    if (fresh) it->second.base_id = inst.id;
    it->second.last_index = i;
    it->second.listed.insert(inst.role);
    key_of[i] = std::move(key);
  }

  std::vector<EventInstance> out;
  out.reserve(corpus.instances.size());
  for (std::size_t i = 0; i < corpus.instances.size(); ++i) {
    const auto& inst = corpus.instances[i];
    out.push_back(inst);
    const Mention& m = mentions.at(key_of[i]);
    if (m.last_index != i) continue;
    for (const auto& role : corpus.ontology.roles(inst.event_type)) {
      if (m.listed.contains(role)) continue;
      EventInstance blank = inst;
      blank.id = m.base_id + "#" + role;
      blank.role = role;
      blank.gold_answers.clear();
      out.push_back(std::move(blank));
    }
  }
  return out;
}

}  // namespace rlqg
