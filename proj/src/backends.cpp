#include "rlqg/backends.hpp"

#include <algorithm>
#include <chrono>
#include <set>

namespace rlqg {

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::toy: return "toy";
    case BackendKind::remote: return "remote";
    case BackendKind::scripted: return "scripted";
  }
  return "scripted";
}

BackendKind parse_backend_kind(std::string_view text) {
  if (text == "toy") return BackendKind::toy;
  if (text == "remote") return BackendKind::remote;
  if (text == "scripted") return BackendKind::scripted;
  throw ConfigError("unknown backend kind '" + std::string(text) + "'");
}

std::string to_string(ScriptedMode m) {
  switch (m) {
    case ScriptedMode::table: return "table";
    case ScriptedMode::reader: return "reader";
    case ScriptedMode::recoverer: return "recoverer";
  }
  return "table";
}

ScriptedMode parse_scripted_mode(std::string_view text) {
  if (text == "table") return ScriptedMode::table;
  if (text == "reader") return ScriptedMode::reader;
  if (text == "recoverer") return ScriptedMode::recoverer;
  throw ConfigError("unknown scripted mode '" + std::string(text) + "'");
}

std::string to_string(FinishReason f) {
  switch (f) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

void BackendConfig::validate() const {
  if (kind == BackendKind::remote && (endpoint.empty() || model.empty()))
    throw ConfigError("remote backend requires endpoint and model");
  if (!(temperature > 0.0)) throw ConfigError("backend temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("backend top_p must be in (0, 1]");
  if (max_tokens <= 0) throw ConfigError("backend max_tokens must be > 0");
  if (retries < 0) throw ConfigError("backend retries must be >= 0");
  if (max_in_flight <= 0) throw ConfigError("backend max_in_flight must be > 0");
  if (shots < 0 || shots > 5) throw ConfigError("backend shots must be in [0, 5]");
}

json BackendConfig::to_json() const {
  json j = {{"kind", to_string(kind)},
            {"scripted", to_string(scripted)},
            {"table", table},
            {"table_path", table_path},
            {"endpoint", endpoint},
            {"model", model},
            {"embedding_model", embedding_model},
            {"api_key_env", api_key_env},
            {"temperature", temperature},
            {"top_p", top_p},
            {"max_tokens", max_tokens},
            {"timeout_seconds", timeout_seconds},
            {"retries", retries},
            {"retry_backoff_seconds", retry_backoff_seconds},
            {"max_in_flight", max_in_flight},
            {"cassette_path", cassette_path},
            {"offline", offline},
            {"checkpoint", checkpoint},
            {"greedy", greedy},
            {"shots", shots}};
  return j;
}

BackendConfig BackendConfig::from_json(const json& doc) {
  BackendConfig c;
  try {
    c.kind = parse_backend_kind(doc.value("kind", to_string(c.kind)));
    c.scripted = parse_scripted_mode(doc.value("scripted", to_string(c.scripted)));
    c.table = doc.value("table", c.table);
    c.table_path = doc.value("table_path", c.table_path);
    c.endpoint = doc.value("endpoint", c.endpoint);
    c.model = doc.value("model", c.model);
    c.embedding_model = doc.value("embedding_model", c.embedding_model);
    c.api_key_env = doc.value("api_key_env", c.api_key_env);
    c.temperature = doc.value("temperature", c.temperature);
    c.top_p = doc.value("top_p", c.top_p);
    c.max_tokens = doc.value("max_tokens", c.max_tokens);
    c.timeout_seconds = doc.value("timeout_seconds", c.timeout_seconds);
    c.retries = doc.value("retries", c.retries);
    c.retry_backoff_seconds = doc.value("retry_backoff_seconds", c.retry_backoff_seconds);
    c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
    c.cassette_path = doc.value("cassette_path", c.cassette_path);
    c.offline = doc.value("offline", c.offline);
    c.checkpoint = doc.value("checkpoint", c.checkpoint);
    c.greedy = doc.value("greedy", c.greedy);
    c.shots = doc.value("shots", c.shots);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<std::string> Backend::candidates(const ChatTranscript& transcript,
                                             const DecodeConfig&) const {
  GenerationResult r = generate(transcript);
  if (!r.ok()) throw BackendError(r.diagnostic);
  return {std::move(r.text)};
}

// ---------------------------------------------------------------------------

namespace {

GenerationResult error_result(std::string diagnostic) {
  GenerationResult r;
  r.finish = FinishReason::error;
  r.attempts = 1;
  r.diagnostic = std::move(diagnostic);
  return r;
}

GenerationResult ok_result(std::string text) {
  GenerationResult r;
  r.text = std::move(text);
  r.attempts = 1;
  return r;
}

// Splits "{a}{sep}{b}" at the first separator.
std::optional<std::pair<std::string_view, std::string_view>> split_turn(std::string_view turn,
                                                                        std::string_view head,
                                                                        std::string_view sep) {
  if (turn.substr(0, head.size()) != head) return std::nullopt;
  const std::size_t at = turn.find(sep, head.size());
  if (at == std::string_view::npos) return std::nullopt;
  return std::pair{turn.substr(head.size(), at - head.size()), turn.substr(at + sep.size())};
}

std::string capitalize_first(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

ScriptedTableBackend::ScriptedTableBackend(std::map<std::string, std::string> table)
    : table_(std::move(table)) {}

GenerationResult ScriptedTableBackend::generate(const ChatTranscript& transcript) const {
  const auto it = table_.find(transcript.query());
  if (it == table_.end()) return error_result("scripted backend has no entry for: " + transcript.query());
  return ok_result(it->second);
}

std::string ScriptedTableBackend::identity() const {
  json j = table_;
  return "scripted-table:" + json_hash(j);
}

// ---------------------------------------------------------------------------

namespace {

const std::set<std::string, std::less<>> kReaderStopwords = {"the", "a",    "an", "is",
                                                             "was", "were", "of", "event"};

}  // namespace

LexicalReaderBackend::LexicalReaderBackend(const Corpus& corpus) {
  std::map<std::string, std::vector<const EventInstance*>> by_context;
  for (const auto& inst : corpus.instances) by_context[inst.context].push_back(&inst);

  json digest = json::array();
  for (const auto& [context, insts] : by_context) {
    Annotated a;
    const auto toks = tokenize_with_offsets(context);
    for (const auto& t : toks) a.tokens.push_back(t.text);
    a.trigger_token.assign(toks.size(), false);
    std::set<std::string> seen;
    for (const EventInstance* inst : insts) {
      for (std::size_t k = 0; k < toks.size(); ++k)
        if (toks[k].start >= inst->trigger.start && toks[k].end <= inst->trigger.end)
          a.trigger_token[k] = true;
      for (const auto& ans : inst->gold_answers) {
        if (!seen.insert(ans).second) continue;
        const std::size_t at = context.find(ans);
        if (at == std::string::npos) continue;
        Filler f{ans, corpus.ontology.interrogative(inst->role), toks.size(), toks.size()};
        for (std::size_t k = 0; k < toks.size(); ++k) {
          if (toks[k].start >= at && toks[k].end <= at + ans.size()) {
            f.first_token = std::min(f.first_token, k);
            f.end_token = k + 1;
          }
        }
        if (f.first_token < f.end_token) a.fillers.push_back(std::move(f));
      }
    }
    std::stable_sort(a.fillers.begin(), a.fillers.end(),
                     [](const Filler& x, const Filler& y) { return x.first_token < y.first_token; });
    digest.push_back(context);
    contexts_.emplace(context, std::move(a));
  }
  identity_ = "scripted-reader:" + json_hash(digest);
}

std::vector<std::string> LexicalReaderBackend::answer(std::string_view question,
                                                      std::string_view context) const {
  const auto it = contexts_.find(context);
  if (it == contexts_.end()) return {};
  const Annotated& a = it->second;

  const TokenList q = tokenize(question);
  std::optional<Interrogative> wh;
  if (!q.empty()) {
    if (q[0] == "who") wh = Interrogative::who;
    else if (q[0] == "where") wh = Interrogative::where;
    else if (q[0] == "what" || q[0] == "which") wh = Interrogative::what;
  }
  std::set<std::string> trigger_words;
  for (std::size_t k = 0; k < a.tokens.size(); ++k)
    if (a.trigger_token[k]) trigger_words.insert(a.tokens[k]);
  std::set<std::string> qwords;
  for (std::size_t k = 1; k < q.size(); ++k)
    if (!kReaderStopwords.contains(q[k]) && !trigger_words.contains(q[k])) qwords.insert(q[k]);

  const Filler* best = nullptr;
  const Filler* first = nullptr;
  int best_score = 0;
  bool tied = false;
  for (const auto& f : a.fillers) {
    if (wh && f.wh != *wh) continue;
    if (!first) first = &f;
    int score = 0;
    auto count = [&](std::size_t k) {
      if (k >= a.tokens.size() || a.trigger_token[k] || kReaderStopwords.contains(a.tokens[k])) return;
      if (qwords.contains(a.tokens[k])) ++score;
    };
    if (f.first_token > 0) count(f.first_token - 1);
    count(f.end_token);
    if (score > best_score) {
      best = &f;
      best_score = score;
      tied = false;
    } else if (score == best_score && score > 0) {
      tied = true;
    }
  }
  if (!first) return {};
  if (!best || tied) return {first->text};
  return {best->text};
}

GenerationResult LexicalReaderBackend::generate(const ChatTranscript& transcript) const {
  const auto parts = split_turn(transcript.query(), "question: ", " context: ");
  if (!parts) return error_result("reader expects 'question: ... context: ...', got: " + transcript.query());
  return ok_result(wrap_answer(answer(parts->first, parts->second)));
}

std::string LexicalReaderBackend::identity() const { return identity_; }

// ---------------------------------------------------------------------------

std::string rule_recover(std::string_view question) {
  static const std::set<std::string> kAux = {"is",   "was", "were", "are", "did", "does", "do",
                                             "will", "has", "had",  "have", "can", "could", "would"};
  std::string q = trim(question);
  while (!q.empty() && (q.back() == '?' || q.back() == ' ')) q.pop_back();
  std::vector<std::string> words;
  for (auto& w : split(q, ' '))
    if (!w.empty()) words.push_back(std::move(w));
  if (words.empty()) return "";

  auto join = [&](std::size_t from) {
    std::string s;
    for (std::size_t i = from; i < words.size(); ++i) s += (s.empty() ? "" : " ") + words[i];
    return s;
  };
  const std::string wh = to_lower_ascii(words[0]);
  const bool second_aux = words.size() > 1 && kAux.contains(to_lower_ascii(words[1]));
  std::string out;
  if (wh == "who") {
    out = "Someone " + join(1);
  } else if ((wh == "what" || wh == "which") && (second_aux || words.size() == 1)) {
    out = "Something " + join(1);
  } else if (wh == "what" || wh == "which") {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(words[1][0])));
    const bool vowel = c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
    out = std::string(vowel ? "An " : "A ") + join(1);
  } else if ((wh == "where" || wh == "when") && words.size() > 2 && second_aux) {
    // "Where did X happen" -> "X happen somewhere"; "Where was X moved" -> "X was moved somewhere"
    const std::string place = wh == "where" ? "somewhere" : "sometime";
    const std::string aux = to_lower_ascii(words[1]);
    std::vector<std::string> rest(words.begin() + 2, words.end());
    if (aux != "did" && aux != "does" && aux != "do") {
      const std::string head = to_lower_ascii(rest[0]);
      const bool article = head == "the" || head == "a" || head == "an";
      const std::size_t at = article && rest.size() > 1 ? 2 : 1;
      rest.insert(rest.begin() + static_cast<long>(at), words[1]);
    }
    rest.push_back(place);
    for (const auto& w : rest) out += (out.empty() ? "" : " ") + w;
  } else {
    out = join(0);
  }
  out = trim(out);
  return capitalize_first(out) + ".";
}

RuleRecovererBackend::RuleRecovererBackend(std::map<std::string, std::string> known)
    : known_(std::move(known)) {
  for (const auto& [user, assistant] : inverse_fewshot_bank().shots) known_.try_emplace(user, assistant);
}

GenerationResult RuleRecovererBackend::generate(const ChatTranscript& transcript) const {
  const std::string& turn = transcript.query();
  if (auto it = known_.find(turn); it != known_.end()) return ok_result(it->second);
  const auto parts = split_turn(turn, "trigger: ", " question: ");
  if (!parts) return error_result("recoverer expects 'trigger: ... question: ...', got: " + turn);
  return ok_result(rule_recover(parts->second));
}

std::string RuleRecovererBackend::identity() const {
  json j = known_;
  return "scripted-recoverer:" + json_hash(j);
}

// ---------------------------------------------------------------------------

ToyBackend::ToyBackend(std::shared_ptr<const Policy> policy, DecodeConfig decode, bool greedy)
    : policy_(std::move(policy)), decode_(decode), greedy_(greedy) {
  if (!policy_) throw ConfigError("toy backend requires a policy");
  decode_.validate();
}

GenerationResult ToyBackend::generate(const ChatTranscript& transcript) const {
  const auto start = std::chrono::steady_clock::now();
  DecodeConfig d = decode_;
  d.greedy = greedy_;
  std::mt19937_64 engine(d.seed);
  const Generation g = sample_ids(policy_->params, policy_->vocab.encode(transcript.query()), d, engine);
  GenerationResult r = ok_result(policy_->vocab.decode(g.ids));
  r.finish = g.finished ? FinishReason::stop : FinishReason::length;
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<std::string> ToyBackend::candidates(const ChatTranscript& transcript,
                                                const DecodeConfig& decode) const {
  std::vector<std::string> out;
  for (auto& [text, score] : beam_search(*policy_, transcript.query(), decode)) out.push_back(std::move(text));
  return out;
}

std::string ToyBackend::identity() const {
  return "toy:" + json_hash(json{{"params", json_hash(params_to_json(policy_->params))},
                                 {"decode", decode_.to_json()},
                                 {"greedy", greedy_}});
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> load_recover_pairs(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  try {
    for (const auto& p : json::parse(read_text_file(path))) {
      const auto prompt = build_inverse_prompt(p.at("trigger").get<std::string>(),
                                               p.at("question").get<std::string>());
      out.emplace(prompt.text, p.at("context").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid recover pairs: " + e.what());
  }
  return out;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const BackendContext& ctx) {
  cfg.validate();
  switch (cfg.kind) {
    case BackendKind::toy: {
      std::shared_ptr<const Policy> policy = ctx.policy;
      if (!policy) {
        if (cfg.checkpoint.empty()) throw ConfigError("toy backend requires a checkpoint");
        if (!std::filesystem::exists(cfg.checkpoint))
          throw ArtifactError(cfg.checkpoint, "missing policy checkpoint: " + cfg.checkpoint);
        policy = std::make_shared<const Policy>(Policy::load(cfg.checkpoint));
      }
      return std::make_unique<ToyBackend>(std::move(policy), ctx.decode, cfg.greedy);
    }
    case BackendKind::remote:
      return std::make_unique<RemoteBackend>(cfg);
    case BackendKind::scripted:
      switch (cfg.scripted) {
        case ScriptedMode::table: {
          auto table = cfg.table;
          if (!cfg.table_path.empty()) {
            try {
              for (auto& [k, v] : json::parse(read_text_file(cfg.table_path)).items())
                table.emplace(k, v.get<std::string>());
            } catch (const json::exception& e) {
              throw ConfigError(cfg.table_path + ": invalid scripted table: " + e.what());
            }
          }
          return std::make_unique<ScriptedTableBackend>(std::move(table));
        }
        case ScriptedMode::reader:
          if (!ctx.corpus) throw ConfigError("scripted reader requires a corpus");
          return std::make_unique<LexicalReaderBackend>(*ctx.corpus);
        case ScriptedMode::recoverer:
          return std::make_unique<RuleRecovererBackend>(ctx.recover_pairs);
      }
  }
  throw ConfigError("unsupported backend configuration");
}

ChatTranscript qa_transcript(std::string_view question, std::string_view context,
                             const FewshotBank& bank, int shots) {
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(shots, 0)), bank.shots.size());
  std::vector<std::pair<std::string, std::string>> used(bank.shots.begin(), bank.shots.begin() + static_cast<long>(n));
  return assemble_fewshot(bank.system, used, qa_user_turn(question, context));
}

Answer qa_answer(const Backend& backend, std::string_view question, std::string_view context,
                 const FewshotBank& bank, int shots) {
  if (trim(question).empty() || trim(context).empty())
    throw BackendError("qa_answer requires a non-empty question and context");
  const GenerationResult r = backend.generate(qa_transcript(question, context, bank, shots));
  if (!r.ok()) throw BackendError(r.diagnostic);
  return parse_answer(r.text);
}

std::string inverse_recover(const Backend& backend, std::string_view trigger,
                            std::string_view question, const FewshotBank& bank, int shots) {
  if (trim(trigger).empty() || trim(question).empty())
    throw BackendError("inverse_recover requires a non-empty trigger and question");
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(shots, 0)), bank.shots.size());
  std::vector<std::pair<std::string, std::string>> used(bank.shots.begin(), bank.shots.begin() + static_cast<long>(n));
  const GenerationResult r =
      backend.generate(assemble_fewshot(bank.system, used, build_inverse_prompt(trigger, question).text));
  if (!r.ok()) throw BackendError(r.diagnostic);
  return r.text;
}

}  // namespace rlqg
