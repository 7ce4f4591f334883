#include "rlqg/config.hpp"

namespace rlqg {

namespace {

std::string style_name(TemplateStyle s) { return s == TemplateStyle::simple ? "simple" : "standard"; }

json corpus_json(const CorpusConfig& c) {
  return {{"kind", c.kind}, {"instances", c.instances}, {"seed", c.seed}, {"path", c.path},
          {"train", c.train}, {"dev", c.dev},           {"test", c.test}, {"ontology", c.ontology}};
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

void require_file(const std::string& p, const std::string& what) {
  if (!p.empty() && !std::filesystem::exists(p)) throw ConfigError(what + " not found: " + p);
}

}  // namespace

BackendConfig default_backend(std::string_view role) {
  BackendConfig b;
  if (role == "qg") b.kind = BackendKind::toy;
  else if (role == "ip") b.scripted = ScriptedMode::recoverer;
  else if (role == "qa") b.scripted = ScriptedMode::reader;
  return b;
}

json RunConfig::to_json() const {
  return {{"seed", seed},
          {"out", out},
          {"offline", offline},
          {"jobs", jobs},
          {"corpus", corpus_json(corpus)},
          {"model", {{"embed", embed}, {"hidden", hidden}}},
          {"sft_mixture", sft_mixture},
          {"sft", sft.to_json()},
          {"rm", rm.to_json()},
          {"ppo", ppo.to_json()},
          {"decode", decode.to_json()},
          {"selection", selection.to_json()},
          {"backends",
           {{"qg", qg.to_json()}, {"ip", ip.to_json()}, {"qa", qa.to_json()}, {"embed", embed_backend.to_json()}}},
          {"eval",
           {{"setting", to_string(eval.setting)},
            {"split", eval.split},
            {"template", style_name(eval.template_style)},
            {"reward_samples", eval.reward_samples}}},
          {"fewshot", {{"qa", fewshot_qa}, {"qg", fewshot_qg}, {"inverse", fewshot_inverse}}},
          {"recover_pairs", recover_pairs}};
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("out");
  j.erase("jobs");
  return json_hash(j);
}

void RunConfig::validate() const {
  if (corpus.kind != "synthetic" && corpus.kind != "native" && corpus.kind != "dygiepp" && corpus.kind != "rams")
    throw ConfigError("unknown corpus kind '" + corpus.kind + "'");
  if (corpus.kind == "synthetic" && corpus.instances == 0) throw ConfigError("synthetic corpus needs instances > 0");
  if (corpus.kind == "native" && (corpus.path.empty() || corpus.ontology.empty()))
    throw ConfigError("native corpus requires path and ontology");
  if ((corpus.kind == "dygiepp" || corpus.kind == "rams") && corpus.train.empty())
    throw ConfigError(corpus.kind + " corpus requires at least a train file");
  for (const auto& [p, what] : std::vector<std::pair<std::string, std::string>>{
           {corpus.path, "corpus file"},
           {corpus.train, "train file"},
           {corpus.dev, "dev file"},
           {corpus.test, "test file"},
           {corpus.ontology, "ontology file"},
           {fewshot_qa, "QA few-shot bank"},
           {fewshot_qg, "QG few-shot bank"},
           {fewshot_inverse, "inverse few-shot bank"},
           {recover_pairs, "recover pairs file"},
           {qg.table_path, "qg table"},
           {ip.table_path, "ip table"},
           {qa.table_path, "qa table"}})
    require_file(p, what);
  if (embed <= 0 || hidden <= 0) throw ConfigError("model dims must be > 0");
  if (sft_mixture.empty()) throw ConfigError("sft_mixture must not be empty");
  for (const auto& m : sft_mixture)
    if (m != "simple" && m != "standard" && m != "contextual")
      throw ConfigError("unknown sft_mixture entry '" + m + "'");
  if (eval.split != "train" && eval.split != "dev" && eval.split != "test")
    throw ConfigError("eval split must be train, dev or test");
  if (eval.reward_samples <= 0) throw ConfigError("eval reward_samples must be > 0");
  if (jobs == 0) throw ConfigError("jobs must be > 0");
  sft.validate();
  rm.validate();
  ppo.validate();
  decode.validate();
  selection.validate();
  qg.validate();
  ip.validate();
  qa.validate();
  embed_backend.validate();
}

RunConfig config_from_json(const json& doc, const std::filesystem::path& base) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  try {
    c.seed = doc.value("seed", c.seed);
    c.out = doc.value("out", c.out);
    c.offline = doc.value("offline", c.offline);
    c.jobs = doc.value("jobs", c.jobs);

    const json corpus = doc.value("corpus", json::object());
    c.corpus.kind = corpus.value("kind", c.corpus.kind);
    c.corpus.instances = corpus.value("instances", c.corpus.instances);
    c.corpus.seed = corpus.value("seed", c.seed);
    c.corpus.path = resolve(corpus.value("path", ""), base);
    c.corpus.train = resolve(corpus.value("train", ""), base);
    c.corpus.dev = resolve(corpus.value("dev", ""), base);
    c.corpus.test = resolve(corpus.value("test", ""), base);
    c.corpus.ontology = resolve(corpus.value("ontology", ""), base);

    const json model = doc.value("model", json::object());
    c.embed = model.value("embed", c.embed);
    c.hidden = model.value("hidden", c.hidden);
    c.sft_mixture = doc.value("sft_mixture", c.sft_mixture);

    auto seeded = [&](const char* key) {
      json j = doc.value(key, json::object());
      if (!j.contains("seed")) j["seed"] = c.seed;
      return j;
    };
    c.sft = TrainConfig::from_json(seeded("sft"), TrainConfig::preset("toy-sft"));
    c.rm = TrainConfig::from_json(seeded("rm"), TrainConfig::preset("toy-rm"));
    c.ppo = PpoConfig::from_json(seeded("ppo"));
    c.decode = DecodeConfig::from_json(seeded("decode"));
    c.selection = SelectionConfig::from_json(doc.value("selection", json::object()));

    const json backends = doc.value("backends", json::object());
    auto backend = [&](const char* key, BackendConfig defaults) {
      if (!backends.contains(key)) return defaults;
      BackendConfig b = BackendConfig::from_json(backends.at(key));
      b.table_path = resolve(b.table_path, base);
      b.cassette_path = resolve(b.cassette_path, base);
      b.checkpoint = resolve(b.checkpoint, base);
      return b;
    };
    c.qg = backend("qg", default_backend("qg"));
    c.ip = backend("ip", default_backend("ip"));
    c.qa = backend("qa", default_backend("qa"));
    c.embed_backend = backend("embed", BackendConfig{});

    const json eval = doc.value("eval", json::object());
    c.eval.setting = parse_eval_setting(eval.value("setting", "practical"));
    c.eval.split = eval.value("split", c.eval.split);
    c.eval.template_style = parse_template_style(eval.value("template", "standard"));
    c.eval.reward_samples = eval.value("reward_samples", c.eval.reward_samples);

    const json fewshot = doc.value("fewshot", json::object());
    c.fewshot_qa = resolve(fewshot.value("qa", ""), base);
    c.fewshot_qg = resolve(fewshot.value("qg", ""), base);
    c.fewshot_inverse = resolve(fewshot.value("inverse", ""), base);
    c.recover_pairs = resolve(doc.value("recover_pairs", ""), base);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const CorpusError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(doc, path.parent_path());
}

void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.seed) {
    c.seed = c.corpus.seed = c.sft.seed = c.rm.seed = c.ppo.seed = c.decode.seed = *o.seed;
  }
  if (o.out) c.out = *o.out;
  if (o.offline) c.offline = true;
  if (o.force) c.force = true;
  if (o.jobs) c.jobs = *o.jobs;
  for (BackendConfig* b : {&c.qg, &c.ip, &c.qa, &c.embed_backend}) b->offline = b->offline || c.offline;
  c.validate();
}

}  // namespace rlqg
