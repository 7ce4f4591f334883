#include "rlqg/cli.hpp"

#include <chrono>
#include <ostream>
#include <set>

namespace rlqg {

namespace fs = std::filesystem;

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> kNames = {"synth", "ingest",   "sft", "augment", "pairs",
                                                  "train-rm", "ppo", "ask", "eval",    "e2e"};
  return kNames;
}

namespace {

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Output directory with config-hash bookkeeping.
class Run {
 public:
  Run(const RunConfig& cfg, std::ostream& out, std::ostream& err)
      : cfg_(cfg), out_(out), err_(err), dir_(cfg.out), hash_(cfg.hash()) {}

  const RunConfig& cfg() const { return cfg_; }
  std::ostream& out() { return out_; }
  fs::path path(const std::string& name) const { return dir_ / name; }
  json tag() const { return {{"config_hash", hash_}}; }
  const std::string& hash() const { return hash_; }

  void write_config() const {
    // Same content the hash covers, so runs differing only in --out or
    // --jobs write identical snapshots.
    json j = cfg_.to_json();
    j.erase("out");
    j.erase("jobs");
    j["config_hash"] = hash_;
    write_text_file(path(artifact::kConfig), j.dump(2) + "\n");
  }

  fs::path require(const std::string& name, const std::string& hint) const {
    const fs::path p = path(name);
    if (!fs::exists(p)) throw ArtifactError(p, "missing artifact " + p.string() + " (" + hint + ")");
    return p;
  }

  void check_hash(const fs::path& p, const json& doc) const {
    const std::string found = doc.is_object() ? doc.value("config_hash", "") : "";
    if (found == hash_) return;
    const std::string msg = "config hash mismatch in " + p.string() + ": artifact has '" + found +
                            "', current config is '" + hash_ + "'";
    if (!cfg_.force) throw ArtifactError(p, msg + " (re-run the stage or pass --force)");
    err_ << "warning: " << msg << "; continuing because of --force\n";
  }

  json load_json(const std::string& name, const std::string& hint) const {
    const fs::path p = require(name, hint);
    json doc;
    try {
      doc = json::parse(read_text_file(p));
    } catch (const json::exception& e) {
      throw ArtifactError(p, p.string() + ": " + e.what());
    }
    check_hash(p, doc);
    return doc;
  }

  std::vector<json> load_jsonl(const std::string& name, const std::string& hint) const {
    const fs::path p = require(name, hint);
    std::vector<json> rows;
    try {
      for (auto& [line, doc] : read_jsonl(p)) rows.push_back(std::move(doc));
    } catch (const json::exception& e) {
      throw ArtifactError(p, p.string() + ": " + e.what());
    }
    if (!rows.empty()) check_hash(p, rows.front());
    return rows;
  }

  Corpus load_corpus() const {
    const json onto = load_json(artifact::kOntology, "run synth or ingest first");
    const fs::path p = require(artifact::kCorpus, "run synth or ingest first");
    Corpus c = rlqg::load_corpus(p, ontology_from_json(onto));
    if (!c.instances.empty()) check_hash(p, read_jsonl(p).front().second);
    return c;
  }

  Policy load_policy(const std::string& name, const std::string& hint) const {
    return Policy::from_json(load_json(name, hint));
  }

 private:
  const RunConfig& cfg_;
  std::ostream& out_;
  std::ostream& err_;
  fs::path dir_;
  std::string hash_;
};

FewshotBank bank_or(const std::string& path, const FewshotBank& builtin) {
  return path.empty() ? builtin : FewshotBank::load(path);
}

struct Services {
  FewshotBank qa_bank, inverse_bank;
  std::map<std::string, std::string> recover_pairs;
  std::unique_ptr<Backend> ip, qa;
  std::unique_ptr<Embedder> embedder;
  ScoringPipeline pipeline;
};

std::unique_ptr<Services> make_services(const RunConfig& cfg, const Corpus& corpus) {
  auto s = std::make_unique<Services>();
  s->qa_bank = bank_or(cfg.fewshot_qa, qa_fewshot_bank());
  s->inverse_bank = bank_or(cfg.fewshot_inverse, inverse_fewshot_bank());
  if (!cfg.recover_pairs.empty()) s->recover_pairs = load_recover_pairs(cfg.recover_pairs);
  BackendContext ctx;
  ctx.corpus = &corpus;
  ctx.recover_pairs = s->recover_pairs;
  ctx.decode = cfg.decode;
  s->ip = make_backend(cfg.ip, ctx);
  s->qa = make_backend(cfg.qa, ctx);
  if (cfg.embed_backend.kind == BackendKind::remote) {
    s->embedder = std::make_unique<RemoteEmbedder>(cfg.embed_backend);
  } else {
    std::vector<std::string> docs;
    std::set<std::string> seen;
    for (const auto& inst : corpus.instances)
      if (seen.insert(inst.context).second) docs.push_back(inst.context);
    s->embedder = std::make_unique<TfidfEmbedder>(fit_default_embedder(docs));
  }
  s->pipeline = {s->ip.get(), s->qa.get(), s->embedder.get(), &s->inverse_bank, &s->qa_bank,
                 cfg.ip.shots, cfg.qa.shots};
  return s;
}

Split parse_split_name(const std::string& s) { return parse_split(s); }

// ---------------------------------------------------------------------------
// Stages.

void save_corpus_artifacts(Run& run, const Corpus& corpus) {
  json onto = ontology_to_json(corpus.ontology);
  onto["config_hash"] = run.hash();
  write_text_file(run.path(artifact::kOntology), onto.dump(2) + "\n");
  save_corpus(corpus, run.path(artifact::kCorpus), run.tag());
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& inst : corpus.instances) ++counts[static_cast<int>(inst.split)];
  run.out() << "corpus: " << corpus.instances.size() << " instances (train " << counts[0] << ", dev "
            << counts[1] << ", test " << counts[2] << ") -> " << run.path(artifact::kCorpus).string() << "\n";
}

void stage_synth(Run& run) {
  const RunConfig& cfg = run.cfg();
  const RoleOntology ontology = cfg.corpus.ontology.empty() ? synthetic_ontology() : load_ontology(cfg.corpus.ontology);
  save_corpus_artifacts(run, generate_synthetic_corpus(cfg.corpus.seed, cfg.corpus.instances, ontology));
}

void stage_ingest(Run& run) {
  const RunConfig& cfg = run.cfg();
  Corpus corpus;
  if (cfg.corpus.kind == "synthetic") throw ConfigError("corpus kind is synthetic; use the synth stage");
  if (cfg.corpus.kind == "native") {
    corpus = load_corpus(cfg.corpus.path, load_ontology(cfg.corpus.ontology));
  } else {
    RoleOntology derived;
    const bool ace = cfg.corpus.kind == "dygiepp";
    for (const auto& [file, split] : {std::pair{cfg.corpus.train, Split::train}, std::pair{cfg.corpus.dev, Split::dev},
                                      std::pair{cfg.corpus.test, Split::test}}) {
      if (file.empty()) continue;
      auto part = ace ? convert_dygiepp_ace(file, split, &derived) : convert_rams(file, split, &derived);
      corpus.instances.insert(corpus.instances.end(), part.begin(), part.end());
    }
    corpus.ontology = cfg.corpus.ontology.empty() ? derived : load_ontology(cfg.corpus.ontology);
    corpus.metadata.source = ace ? Source::ace_like : Source::rams_like;
    validate_corpus(corpus);
  }
  save_corpus_artifacts(run, corpus);
}

std::string target_question(const EventInstance& inst, const std::string& kind, const RoleOntology& o) {
  if (kind == "contextual") {
    if (auto q = render_contextual_question(inst, o)) return *q;
    return render_template_question(inst.role, inst.trigger.text, TemplateStyle::standard, o);
  }
  return render_template_question(inst.role, inst.trigger.text, parse_template_style(kind), o);
}

void stage_sft(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Corpus corpus = run.load_corpus();
  std::vector<std::string> texts;
  for (const auto& inst : corpus.instances) {
    texts.push_back(build_qg_prompt(inst).text);
    for (const char* kind : {"simple", "standard", "contextual"}) texts.push_back(target_question(inst, kind, corpus.ontology));
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& inst : corpus.split_of(Split::train))
    for (const auto& kind : cfg.sft_mixture)
      pairs.emplace_back(build_qg_prompt(inst).text, target_question(inst, kind, corpus.ontology));
  if (pairs.empty()) throw TrainingError("training split is empty");

  Policy policy = Policy::create(Vocab::build(texts), cfg.embed, cfg.hidden, cfg.sft.seed);
  const SftReport report = sft_train(policy, pairs, cfg.sft);
  json log = run.tag();
  log["initial_loss"] = report.initial_loss;
  log["epoch_loss"] = report.epoch_loss;
  log["steps"] = report.steps;
  log["pairs"] = pairs.size();
  log["vocab"] = policy.vocab.size();
  log["parameters"] = policy.params.parameter_count();
  write_text_file(run.path(artifact::kSftLog), log.dump(2) + "\n");
  policy.save(run.path(artifact::kSftPolicy), run.tag());
  run.out() << "sft: " << pairs.size() << " pairs, vocab " << policy.vocab.size() << ", loss "
            << fixed(report.initial_loss) << " -> " << fixed(report.epoch_loss.back()) << "\n";
}

void stage_augment(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Corpus corpus = run.load_corpus();
  BackendContext ctx;
  ctx.corpus = &corpus;
  ctx.decode = cfg.decode;
  if (cfg.qg.kind == BackendKind::toy && cfg.qg.checkpoint.empty())
    ctx.policy = std::make_shared<const Policy>(run.load_policy(artifact::kSftPolicy, "run sft first"));
  const auto qg = make_backend(cfg.qg, ctx);
  const auto train = corpus.split_of(Split::train);
  struct Row {
    std::vector<std::string> candidates;
    std::string error;
  };
  const auto rows = parallel_map<Row>(train.size(), cfg.jobs, [&](std::size_t i) {
    try {
      return Row{qg->candidates(qg_transcript(train[i], cfg.qg.shots), cfg.decode), {}};
    } catch (const Error& e) {
      return Row{{}, e.what()};
    }
  });
  std::string text;
  std::size_t failures = 0, total = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    ordered_json j;
    j["instance_id"] = train[i].id;
    j["candidates"] = rows[i].candidates;
    if (!rows[i].error.empty()) {
      j["error"] = rows[i].error;
      ++failures;
    }
    j["config_hash"] = run.hash();
    text += j.dump() + "\n";
    total += rows[i].candidates.size();
  }
  write_text_file(run.path(artifact::kCandidates), text);
  run.out() << "augment: " << total << " candidates for " << train.size() << " instances (" << failures
            << " failures) via " << qg->identity() << "\n";
}

void stage_pairs(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Corpus corpus = run.load_corpus();
  std::map<std::string, std::vector<std::string>> by_id;
  for (const auto& row : run.load_jsonl(artifact::kCandidates, "run augment first"))
    by_id[row.at("instance_id").get<std::string>()] = row.at("candidates").get<std::vector<std::string>>();
  std::vector<EventInstance> instances;
  std::vector<std::vector<std::string>> candidates;
  for (const auto& inst : corpus.instances) {
    auto it = by_id.find(inst.id);
    if (it == by_id.end()) continue;
    instances.push_back(inst);
    candidates.push_back(it->second);
  }
  const auto services = make_services(cfg, corpus);
  PreferenceDataset ds = build_preference_dataset(instances, candidates, services->pipeline, cfg.selection, cfg.jobs);
  save_preference_dataset(ds, run.path(artifact::kPreferences), run.tag());
  json summary = run.tag();
  summary["tally"] = ds.tally.to_json();
  summary["selection"] = cfg.selection.to_json();
  summary["ip"] = services->ip->identity();
  summary["qa"] = services->qa->identity();
  summary["embedder"] = services->embedder->identity();
  write_text_file(run.path(artifact::kPreferenceSummary), summary.dump(2) + "\n");
  run.out() << "pairs: " << ds.tally.pairs << " pairs from " << ds.tally.instances << " instances ("
            << ds.tally.gated_out << " gated out, " << ds.tally.failures << " failures)\n";
}

std::vector<PreferencePair> load_pairs(const Run& run) {
  std::vector<PreferencePair> pairs;
  for (const auto& row : run.load_jsonl(artifact::kPreferences, "run pairs first")) pairs.push_back(pair_from_json(row));
  return pairs;
}

void stage_train_rm(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Policy sft = run.load_policy(artifact::kSftPolicy, "run sft first");
  const auto pairs = load_pairs(run);
  std::vector<PreferenceText> texts;
  for (const auto& p : pairs) texts.push_back({p.prompt, p.chosen, p.rejected});
  RewardModel rm = RewardModel::from_policy(sft, cfg.rm.seed);
  const RmTrainReport report = train_reward_model(rm, texts, cfg.rm);
  json log = run.tag();
  log["pairs"] = texts.size();
  log["initial_loss"] = report.initial_loss;
  log["initial_accuracy"] = report.initial_accuracy;
  log["epoch_loss"] = report.epoch_loss;
  log["epoch_accuracy"] = report.epoch_accuracy;
  write_text_file(run.path(artifact::kRmLog), log.dump(2) + "\n");
  rm.save(run.path(artifact::kRewardModel), run.tag());
  run.out() << "train-rm: " << texts.size() << " pairs, loss " << fixed(report.initial_loss) << " -> "
            << fixed(report.epoch_loss.back()) << ", accuracy " << fixed(report.epoch_accuracy.back(), 3) << "\n";
}

void stage_ppo(Run& run) {
  const RunConfig& cfg = run.cfg();
  const RewardModel rm = RewardModel::from_json(run.load_json(artifact::kRewardModel, "run train-rm first"));
  const Policy sft = run.load_policy(artifact::kSftPolicy, "run sft first");
  std::vector<std::string> prompts;
  for (const auto& p : load_pairs(run)) prompts.push_back(p.prompt);
  Policy policy = sft;
  std::string log;
  const PpoReport report = ppo_refine(policy, sft.params, rm, prompts, cfg.ppo, [&](const PpoIterationLog& it) {
    json j = it.to_json();
    j["config_hash"] = run.hash();
    log += j.dump() + "\n";
  });
  write_text_file(run.path(artifact::kPpoLog), log);
  json extra = run.tag();
  extra["status"] = report.status;
  policy.save(run.path(artifact::kRlPolicy), extra);
  run.out() << "ppo: " << report.log.size() << " iterations, " << report.status;
  if (!report.log.empty())
    run.out() << ", reward " << fixed(report.log.front().mean_reward) << " -> " << fixed(report.log.back().mean_reward)
              << ", kl " << fixed(report.log.back().mean_kl);
  run.out() << "\n";
}

// Mean combined score of questions sampled from a policy on the PPO prompts.
struct RewardSummary {
  double mean = 0.0;
  std::size_t scored = 0;
  std::size_t failures = 0;
};

RewardSummary sampled_reward(const Policy& policy, const std::vector<EventInstance>& instances,
                             const Services& services, const RunConfig& cfg) {
  const int k = cfg.eval.reward_samples;
  const auto scores = parallel_map<std::vector<double>>(instances.size(), cfg.jobs, [&](std::size_t i) {
    std::vector<double> out;
    for (int s = 0; s < k; ++s) {
      DecodeConfig d = cfg.decode;
      d.greedy = false;
      d.seed = cfg.decode.seed + 1000003ULL * i + static_cast<std::uint64_t>(s);
      const std::string q = sample(policy, build_qg_prompt(instances[i]).text, d);
      try {
        out.push_back(score_question(instances[i], q, services.pipeline, cfg.selection).score);
      } catch (const Error&) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    return out;
  });
  RewardSummary r;
  for (const auto& v : scores)
    for (double x : v) {
      if (std::isnan(x)) {
        ++r.failures;
        continue;
      }
      r.mean += x;
      ++r.scored;
    }
  if (r.scored) r.mean /= static_cast<double>(r.scored);
  return r;
}

void stage_eval(Run& run) {
  const RunConfig& cfg = run.cfg();
  const Corpus corpus = run.load_corpus();
  auto sft = std::make_shared<const Policy>(run.load_policy(artifact::kSftPolicy, "run sft first"));
  auto rl = std::make_shared<const Policy>(run.load_policy(artifact::kRlPolicy, "run ppo first"));
  const auto pairs = load_pairs(run);
  const auto services = make_services(cfg, corpus);

  Corpus split;
  split.ontology = corpus.ontology;
  split.instances = corpus.split_of(parse_split_name(cfg.eval.split));
  const std::vector<EventInstance> instances =
      cfg.eval.setting == EvalSetting::full ? expand_full_eval(split) : split.instances;

  DecodeConfig greedy = cfg.decode;
  greedy.greedy = true;
  const std::string template_label =
      std::string("Template (") + (cfg.eval.template_style == TemplateStyle::simple ? "simple" : "standard") + ")";
  const std::vector<std::pair<std::string, Questioner>> methods = {
      {template_label, template_questioner(cfg.eval.template_style, corpus.ontology)},
      {"SFT", policy_questioner(sft, greedy)},
      {"RLQG", policy_questioner(rl, greedy)},
  };
  const fs::path dir = run.path(artifact::kEvalDir);
  std::vector<MetricReport> reports;
  for (const auto& [label, questioner] : methods) {
    EvalOptions opts;
    opts.label = label;
    opts.qa_bank = &services->qa_bank;
    opts.qa_shots = cfg.qa.shots;
    opts.jobs = cfg.jobs;
    opts.config_hash = run.hash();
    std::vector<InstanceScore> details;
    MetricReport r = evaluate(instances, questioner, *services->qa, *services->embedder, cfg.eval.setting, opts, &details);
    std::string slug = label == "SFT" ? "sft" : label == "RLQG" ? "rlqg" : "template";
    emit_report(r, ReportFormat::json, dir / (slug + ".json"));
    std::string lines;
    for (const auto& d : details) {
      ordered_json j = {{"instance_id", d.id}, {"question", d.question}, {"answer", d.answer},
                        {"em", d.em},          {"cor", d.cor}};
      j["semsim"] = d.semsim ? json(*d.semsim) : json(nullptr);
      if (d.skipped) j["error"] = d.error;
      j["config_hash"] = run.hash();
      lines += j.dump() + "\n";
    }
    write_text_file(dir / (slug + "_details.jsonl"), lines);
    reports.push_back(std::move(r));
  }
  const ComparisonTable table = compare_methods(reports);
  emit_table(table, ReportFormat::json, dir / "comparison.json");
  emit_table(table, ReportFormat::csv, dir / "comparison.csv");

  std::map<std::string, const EventInstance*> by_id;
  for (const auto& inst : corpus.instances) by_id[inst.id] = &inst;
  std::vector<EventInstance> prompts;
  for (const auto& p : pairs)
    if (auto it = by_id.find(p.instance_id); it != by_id.end()) prompts.push_back(*it->second);
  const RewardSummary sft_reward = sampled_reward(*sft, prompts, *services, cfg);
  const RewardSummary rl_reward = sampled_reward(*rl, prompts, *services, cfg);
  json reward = run.tag();
  reward["prompts"] = prompts.size();
  reward["samples_per_prompt"] = cfg.eval.reward_samples;
  reward["sft"] = {{"mean", sft_reward.mean}, {"scored", sft_reward.scored}, {"failures", sft_reward.failures}};
  reward["rlqg"] = {{"mean", rl_reward.mean}, {"scored", rl_reward.scored}, {"failures", rl_reward.failures}};
  reward["delta"] = rl_reward.mean - sft_reward.mean;
  write_text_file(dir / "reward_comparison.json", reward.dump(2) + "\n");

  std::string md = "# Question generation comparison\n\n" + render_table(table, ReportFormat::markdown);
  md += "\nMean combined reward of sampled questions on " + std::to_string(prompts.size()) +
        " preference prompts: SFT " + fixed(sft_reward.mean) + ", RLQG " + fixed(rl_reward.mean) + " (delta " +
        fixed(rl_reward.mean - sft_reward.mean) + ").\n";
  write_text_file(dir / "comparison.md", md);
  run.out() << render_table(table, ReportFormat::markdown) << "mean combined reward: SFT " << fixed(sft_reward.mean)
            << ", RLQG " << fixed(rl_reward.mean) << "\n";
}

void stage_ask(Run& run, const AskRequest& ask) {
  const RunConfig& cfg = run.cfg();
  const Corpus corpus = run.load_corpus();
  std::string question = ask.question;
  std::string context = ask.context;
  if (context.empty()) throw ConfigError("ask needs --context");
  if (question.empty()) {
    if (ask.role.empty() || ask.trigger.empty()) throw ConfigError("ask needs --question, or --role and --trigger");
    if (ask.policy != "rl" && ask.policy != "sft") throw ConfigError("ask --policy must be rl or sft");
    const Policy policy = ask.policy == "rl" ? run.load_policy(artifact::kRlPolicy, "run ppo first")
                                             : run.load_policy(artifact::kSftPolicy, "run sft first");
    DecodeConfig d = cfg.decode;
    d.greedy = true;
    question = sample(policy, qg_prompt_text(ask.role, ask.trigger, context), d);
  }
  const auto services = make_services(cfg, corpus);
  const Answer a = qa_answer(*services->qa, question, context, services->qa_bank, cfg.qa.shots);
  run.out() << "question: " << question << "\nanswer: " << a.render() << "\n";
}

void dispatch(const std::string& name, Run& run, const AskRequest& ask) {
  if (name == "synth") return stage_synth(run);
  if (name == "ingest") return stage_ingest(run);
  if (name == "sft") return stage_sft(run);
  if (name == "augment") return stage_augment(run);
  if (name == "pairs") return stage_pairs(run);
  if (name == "train-rm") return stage_train_rm(run);
  if (name == "ppo") return stage_ppo(run);
  if (name == "eval") return stage_eval(run);
  if (name == "ask") return stage_ask(run, ask);
  if (name == "e2e") {
    for (const char* stage : {"corpus", "sft", "augment", "pairs", "train-rm", "ppo", "eval"}) {
      const auto start = std::chrono::steady_clock::now();
      const std::string s = stage;
      if (s == "corpus") run.cfg().corpus.kind == "synthetic" ? stage_synth(run) : stage_ingest(run);
      else dispatch(s, run, ask);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      run.out() << "  [" << s << " " << fixed(secs, 1) << " s]\n";
    }
    return;
  }
  throw ConfigError("unknown subcommand '" + name + "'");
}

}  // namespace

int run_subcommand(const std::string& name, const RunConfig& cfg, std::ostream& out, std::ostream& err,
                   const AskRequest& ask) {
  Run run(cfg, out, err);
  try {
    if (name != "ask") run.write_config();
    dispatch(name, run, ask);
    return kExitOk;
  } catch (const ArtifactError& e) {
    err << "error: " << e.what() << "\n";
    return kExitArtifact;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error in " << name << ": " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace rlqg
