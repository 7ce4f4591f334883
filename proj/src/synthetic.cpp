#include <algorithm>
#include <random>
#include <set>

#include "rlqg/corpus.hpp"

namespace rlqg {

namespace {

// Sentence patterns use a small markup:
//   {trigger}   the trigger word
//   {role}      the filler of `role`
//   <a|b|c>     one option drawn uniformly
//   [ ... ]     optional group; kept iff the single role inside is present
struct Scenario {
  std::string event_type;
  std::vector<std::string> triggers;
  std::string pattern;
  std::map<std::string, std::vector<std::string>> fillers;
};

const std::vector<Scenario>& scenarios() {
  static const std::vector<Scenario> kScenarios = {
      {"Conflict.Attack",
       {"attack", "firefight", "ambush", "raid", "assault", "bombing"},
       "{attacker} <launched|started|led> the {trigger} against {target}"
       "[ <in|near|outside> {place}][ <with|using> {instrument}].",
       {{"attacker",
         {"Marines", "Rebel fighters", "Insurgents", "Militants", "Coalition troops",
          "Government forces", "Guerrillas", "Tribal gunmen"}},
        {"target",
         {"soldiers", "villagers", "a convoy", "police officers", "Iraqi positions",
          "a checkpoint", "civilians", "the garrison"}},
        {"place", {"Baghdad", "Basra", "Chamchamal", "Kabul", "Mosul", "Tikrit", "Fallujah", "Kirkuk"}},
        {"instrument",
         {"rifles", "rockets", "grenades", "mortars", "warplanes", "tanks", "artillery", "drones"}}}},
      {"Personnel.Start-Position",
       {"hired", "appointed", "named", "recruited", "selected"},
       "{person} was {trigger} by {entity} as {position}[ <in|at> {place}].",
       {{"person",
         {"Callum McCarthy", "Barry Diller", "Maria Lopez", "Ahmed Karimi", "Elena Petrova",
          "David Okafor", "Anna Schmidt", "Yuki Tanaka"}},
        {"entity",
         {"Vivendi", "WorldCom", "Reuters", "Siemens", "the central bank", "the ministry",
          "Renault", "Unilever"}},
        {"position", {"chairman", "director", "spokesman", "editor", "chief executive", "treasurer"}},
        {"place", {"London", "Paris", "Cairo", "Berlin", "Tokyo", "Madrid"}}}},
      {"Justice.Arrest-Jail",
       {"arrested", "detained", "jailed", "captured"},
       "{agent} {trigger} <suspect|activist|defendant> {person}[ <in|near> {place}]"
       "[ <for|over> {crime}].",
       {{"agent",
         {"Police", "Federal agents", "Soldiers", "Officers", "Border guards", "Investigators"}},
        {"person",
         {"Tom Andrews", "Dale Bumpers", "Raj Patel", "Omar Haddad", "Sara Cohen", "Li Wei",
          "John Smith", "Howard Davies"}},
        {"place", {"Gaza", "Lagos", "Manila", "Karachi", "Bogota", "Istanbul"}},
        {"crime", {"fraud", "murder", "theft", "bribery", "smuggling", "espionage"}}}},
      {"Transaction.Transfer-Ownership",
       {"sold", "transferred", "traded", "handed"},
       "{seller} {trigger} {artifact} to {buyer}[ <in|at> {place}].",
       {{"seller", {"Chevron", "Gazprom", "Nestle", "Samsung", "Boeing", "Toyota", "Pfizer", "Alcoa"}},
        {"buyer", {"Shell", "Rosneft", "Danone", "Sony", "Airbus", "Honda", "Novartis", "Rio Tinto"}},
        {"artifact", {"shares", "a factory", "the newspaper", "oil fields", "a stake", "the brand"}},
        {"place", {"Geneva", "Dubai", "Singapore", "Zurich", "Houston", "Mumbai"}}}},
      {"Movement.Transport",
       {"moved", "transported", "shipped", "evacuated", "carried"},
       "{agent} {trigger} {artifact} from {origin} and into {destination}[ <by|aboard> {vehicle}].",
       {{"agent",
         {"The Red Cross", "United Nations staff", "The army", "Aid workers", "Smugglers",
          "The navy"}},
        {"artifact",
         {"refugees", "prisoners", "wounded soldiers", "workers", "pilgrims", "supplies"}},
        {"origin", {"Amman", "Beirut", "Damascus", "Aleppo", "Erbil", "Haifa"}},
        {"destination", {"Jeddah", "Muscat", "Ankara", "Larnaca", "Tabriz", "Aqaba"}},
        {"vehicle", {"truck", "helicopter", "ship", "train", "bus", "convoy"}}}},
  };
  return kScenarios;
}

const std::vector<std::string>& generic_fillers(Interrogative wh) {
  static const std::vector<std::string> kWho = {"Alice Moreau", "Kofi Mensah", "Ivan Horvat",
                                                "Lena Berg", "Pablo Ruiz", "Mina Aziz"};
  static const std::vector<std::string> kWhere = {"Oslo", "Lima", "Hanoi", "Quito", "Accra", "Riga"};
  static const std::vector<std::string> kWhat = {"documents", "a vehicle", "equipment",
                                                 "funds", "a contract", "weapons"};
  switch (wh) {
    case Interrogative::who: return kWho;
    case Interrogative::where: return kWhere;
    case Interrogative::what: return kWhat;
  }
  return kWhat;
}

struct Composed {
  std::string text;
  TriggerSpan trigger;
  std::map<std::string, std::string> answers;
};

class PatternComposer {
 public:
  PatternComposer(std::mt19937_64& rng, std::string trigger,
                  std::map<std::string, std::string> fillers, std::set<std::string> present)
      : rng_(rng), trigger_(std::move(trigger)), fillers_(std::move(fillers)),
        present_(std::move(present)) {}

  Composed compose(const std::string& pattern) {
    out_ = {};
    emit(pattern, 0, pattern.size());
    return out_;
  }

 private:
  // Returns the role named inside an optional group, if any.
  static std::string group_role(const std::string& p, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      if (p[i] != '{') continue;
      const std::size_t close = p.find('}', i);
      std::string name = p.substr(i + 1, close - i - 1);
      if (name != "trigger") return name;
    }
    return {};
  }

  void emit(const std::string& p, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e;) {
      const char c = p[i];
      if (c == '[') {
        const std::size_t close = p.find(']', i);
        const std::string role = group_role(p, i + 1, close);
        // Choices inside a dropped group are still drawn so the random stream
        // does not depend on which roles are present.
        const std::size_t saved = out_.text.size();
        emit(p, i + 1, close);
        if (!present_.contains(role)) out_.text.resize(saved);
        i = close + 1;
      } else if (c == '<') {
        const std::size_t close = p.find('>', i);
        const auto options = split(std::string_view(p).substr(i + 1, close - i - 1), '|');
        out_.text += options[rng_() % options.size()];
        i = close + 1;
      } else if (c == '{') {
        const std::size_t close = p.find('}', i);
        const std::string name = p.substr(i + 1, close - i - 1);
        if (name == "trigger") {
          out_.trigger = {trigger_, out_.text.size(), out_.text.size() + trigger_.size()};
          out_.text += trigger_;
        } else {
          const std::string& filler = fillers_.at(name);
          if (present_.contains(name)) out_.answers[name] = filler;
          out_.text += filler;
        }
        i = close + 1;
      } else {
        out_.text.push_back(c);
        ++i;
      }
    }
  }

  std::mt19937_64& rng_;
  std::string trigger_;
  std::map<std::string, std::string> fillers_;
  std::set<std::string> present_;
  Composed out_;
};

// Pattern for event types outside the bundled world: one clause per role.
Scenario generic_scenario(const std::string& type, const RoleOntology& ontology) {
  Scenario sc;
  sc.event_type = type;
  std::string word = type.substr(type.find_last_of('.') == std::string::npos ? 0 : type.find_last_of('.') + 1);
  for (char& ch : word) ch = (ch == '-' || ch == '_') ? ' ' : ch;
  sc.triggers = {to_lower_ascii(word)};
  sc.pattern = "Reports on the {trigger} named";
  bool first = true;
  for (const auto& role : ontology.roles(type)) {
    sc.pattern += std::string(first ? "[ " : "[; ") + role + " {" + role + "}]";
    sc.fillers[role] = generic_fillers(ontology.interrogative(role));
    first = false;
  }
  sc.pattern += ".";
  return sc;
}

// Roles outside optional groups are always present.
std::set<std::string> mandatory_roles(const std::string& pattern) {
  std::set<std::string> out;
  int depth = 0;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] == '[') ++depth;
    if (pattern[i] == ']') --depth;
    if (pattern[i] == '{' && depth == 0) {
      const std::size_t close = pattern.find('}', i);
      std::string name = pattern.substr(i + 1, close - i - 1);
      if (name != "trigger") out.insert(name);
    }
  }
  return out;
}

}  // namespace

RoleOntology synthetic_ontology() {
  RoleOntology o;
  o.event_types = {
      {"Conflict.Attack", {"attacker", "target", "place", "instrument"}},
      {"Personnel.Start-Position", {"person", "entity", "position", "place"}},
      {"Justice.Arrest-Jail", {"agent", "person", "place", "crime"}},
      {"Transaction.Transfer-Ownership", {"seller", "buyer", "artifact", "place"}},
      {"Movement.Transport", {"agent", "artifact", "origin", "destination", "vehicle"}},
  };
  o.interrogatives = {
      {"attacker", Interrogative::who},  {"target", Interrogative::who},
      {"person", Interrogative::who},    {"entity", Interrogative::who},
      {"agent", Interrogative::who},     {"seller", Interrogative::who},
      {"buyer", Interrogative::who},     {"place", Interrogative::where},
      {"origin", Interrogative::where},  {"destination", Interrogative::where},
      {"instrument", Interrogative::what}, {"position", Interrogative::what},
      {"crime", Interrogative::what},    {"artifact", Interrogative::what},
      {"vehicle", Interrogative::what},
  };
  o.contextual_templates = {
      {"Conflict.Attack",
       {{"attacker", "Who {after} the {trigger}?"},
        {"target", "Who was the {trigger} {before}?"},
        {"place", "Where did the {trigger} take place?"},
        {"instrument", "What was the {trigger} carried out {before}?"}}},
      {"Personnel.Start-Position",
       {{"person", "Who was {trigger}?"},
        {"entity", "Who was someone {trigger} {before}?"},
        {"position", "What was someone {trigger} {before}?"},
        {"place", "Where was someone {trigger}?"}}},
      {"Justice.Arrest-Jail",
       {{"agent", "Who {trigger} someone?"},
        {"person", "Who was the {before} {trigger}?"},
        {"place", "Where was someone {trigger}?"},
        {"crime", "What was someone {trigger} {before}?"}}},
      {"Transaction.Transfer-Ownership",
       {{"seller", "Who {trigger} something?"},
        {"buyer", "Who was something {trigger} {before}?"},
        {"artifact", "What was {trigger}?"},
        {"place", "Where was something {trigger}?"}}},
      {"Movement.Transport",
       {{"agent", "Who {trigger} someone?"},
        {"artifact", "What was {trigger} {after} somewhere?"},
        {"origin", "Where was something {trigger} {before}?"},
        {"destination", "Where was something {trigger} {before}?"},
        {"vehicle", "What was something {trigger} {before}?"}}},
  };
  return o;
}

Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_instances,
                                 const RoleOntology& ontology) {
  if (n_instances == 0) throw CorpusError("n_instances must be positive");
  if (ontology.empty()) throw CorpusError("ontology is empty");

  std::vector<Scenario> world;
  for (const auto& [type, roles] : ontology.event_types) {
    auto it = std::find_if(scenarios().begin(), scenarios().end(),
                           [&](const Scenario& s) { return s.event_type == type; });
    bool usable = it != scenarios().end();
    if (usable)
      for (const auto& r : roles) usable = usable && it->fillers.contains(r);
    world.push_back(usable ? *it : generic_scenario(type, ontology));
  }

  std::mt19937_64 rng(seed);
  Corpus corpus;
  corpus.ontology = ontology;
  corpus.metadata = {Source::synthetic, seed};

  for (std::size_t mention = 0; corpus.instances.size() < n_instances; ++mention) {
    const Scenario& sc = world[rng() % world.size()];
    const std::string trigger = sc.triggers[rng() % sc.triggers.size()];

    std::map<std::string, std::string> fillers;
    std::set<std::string> used;
    for (const auto& role : ontology.roles(sc.event_type)) {
      const auto& pool = sc.fillers.at(role);
      std::string pick = pool[rng() % pool.size()];
      for (std::size_t tries = 0; used.contains(pick) && tries < pool.size(); ++tries)
        pick = pool[(rng() % pool.size())];
      used.insert(pick);
      fillers[role] = pick;
    }

    std::set<std::string> present = mandatory_roles(sc.pattern);
    for (const auto& role : ontology.roles(sc.event_type))
      if (!present.contains(role) && uniform01(rng) < 0.65) present.insert(role);
    if (present.empty()) present.insert(ontology.roles(sc.event_type).front());

    const double u = uniform01(rng);
    const Split split = u < 0.7 ? Split::train : (u < 0.8 ? Split::dev : Split::test);

    PatternComposer composer(rng, trigger, fillers, present);
    Composed c = composer.compose(sc.pattern);

    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "syn-%05zu-", mention);
    for (const auto& role : ontology.roles(sc.event_type)) {
      if (corpus.instances.size() >= n_instances) break;
      auto ans = c.answers.find(role);
      if (ans == c.answers.end()) continue;
      EventInstance inst;
      inst.id = prefix + role;
      inst.context = c.text;
      inst.trigger = c.trigger;
      inst.event_type = sc.event_type;
      inst.role = role;
      inst.gold_answers = {ans->second};
      inst.split = split;
      inst.source = Source::synthetic;
      corpus.instances.push_back(std::move(inst));
    }
  }
  validate_corpus(corpus);
  return corpus;
}

}  // namespace rlqg
