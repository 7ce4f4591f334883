#include "rlqg/evalharness.hpp"

#include <cstdio>
#include <sstream>

#include "rlqg/preference.hpp"

namespace rlqg {

std::string to_string(EvalSetting s) { return s == EvalSetting::practical ? "practical" : "full"; }

EvalSetting parse_eval_setting(std::string_view text) {
  if (text == "practical") return EvalSetting::practical;
  if (text == "full") return EvalSetting::full;
  throw ConfigError("unknown eval setting '" + std::string(text) + "'");
}

json MetricReport::to_json() const {
  return {{"label", label},
          {"setting", to_string(setting)},
          {"instances", instances},
          {"answerable", answerable},
          {"unanswerable", unanswerable},
          {"skipped", skipped},
          {"semsim_skipped", semsim_skipped},
          {"em", em},
          {"cor", cor},
          {"semsim", semsim},
          {"embedder", embedder},
          {"config_hash", config_hash},
          {"semsim_operands", "gold answer rendering vs predicted answer rendering"}};
}

MetricReport MetricReport::from_json(const json& doc) {
  try {
    MetricReport r;
    r.label = doc.at("label").get<std::string>();
    r.setting = parse_eval_setting(doc.at("setting").get<std::string>());
    r.instances = doc.at("instances").get<std::size_t>();
    r.answerable = doc.at("answerable").get<std::size_t>();
    r.unanswerable = doc.at("unanswerable").get<std::size_t>();
    r.skipped = doc.at("skipped").get<std::size_t>();
    r.semsim_skipped = doc.value("semsim_skipped", std::size_t{0});
    r.em = doc.at("em").get<double>();
    r.cor = doc.at("cor").get<double>();
    r.semsim = doc.at("semsim").get<double>();
    r.embedder = doc.value("embedder", "");
    r.config_hash = doc.value("config_hash", "");
    if (r.answerable + r.unanswerable != r.instances) throw Error("instance counts are inconsistent");
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed metric report: ") + e.what());
  }
}

Questioner template_questioner(TemplateStyle style, const RoleOntology& ontology) {
  return [style, &ontology](const EventInstance& inst) {
    return render_template_question(inst.role, inst.trigger.text, style, ontology);
  };
}

Questioner contextual_questioner(const RoleOntology& ontology) {
  return [&ontology](const EventInstance& inst) {
    if (auto q = render_contextual_question(inst, ontology)) return *q;
    return render_template_question(inst.role, inst.trigger.text, TemplateStyle::standard, ontology);
  };
}

Questioner policy_questioner(std::shared_ptr<const Policy> policy, DecodeConfig decode) {
  return [policy = std::move(policy), decode](const EventInstance& inst) {
    const std::string q = sample(*policy, build_qg_prompt(inst).text, decode);
    if (trim(q).empty()) throw Error("policy produced an empty question");
    return q;
  };
}

Questioner backend_questioner(const Backend& backend, int shots) {
  return [&backend, shots](const EventInstance& inst) {
    const GenerationResult r = backend.generate(qg_transcript(inst, shots));
    if (!r.ok()) throw BackendError(r.diagnostic);
    return trim(r.text);
  };
}

namespace {

InstanceScore score_instance(const EventInstance& inst, const Questioner& questioner, const Backend& qa,
                             const Embedder& embedder, const FewshotBank& bank, int shots) {
  InstanceScore s;
  s.id = inst.id;
  try {
    s.question = questioner(inst);
    const Answer a = qa_answer(qa, s.question, inst.context, bank, shots);
    s.answer = a.render();
  } catch (const Error& e) {
    s.skipped = true;
    s.error = e.what();
    return s;
  }
  s.em = exact_match(inst.gold_answers, s.answer);
  s.cor = cor_multi(inst.gold_answers, s.answer);
  if (inst.answerable()) {
    double best = 0.0;
    for (const auto& g : inst.gold_answers) best = std::max(best, semsim(g, s.answer, embedder).value);
    s.semsim = best;
  }
  return s;
}

}  // namespace

MetricReport aggregate(const std::vector<EventInstance>& instances,
                       const std::vector<InstanceScore>& scores, EvalSetting setting) {
  if (instances.size() != scores.size()) throw Error("score list and instances differ in length");
  MetricReport r;
  r.setting = setting;
  r.instances = instances.size();
  double em = 0.0, cor = 0.0, sem = 0.0;
  std::size_t scored = 0, sem_n = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (instances[i].answerable()) ++r.answerable;
    else ++r.unanswerable;
    const InstanceScore& s = scores[i];
    if (s.skipped) {
      ++r.skipped;
      continue;
    }
    ++scored;
    em += s.em ? 1.0 : 0.0;
    cor += s.cor;
    if (s.semsim) {
      sem += *s.semsim;
      ++sem_n;
    } else {
      ++r.semsim_skipped;
    }
  }
  if (scored > 0) {
    r.em = 100.0 * em / static_cast<double>(scored);
    r.cor = 100.0 * cor / static_cast<double>(scored);
  }
  if (sem_n > 0) r.semsim = 100.0 * sem / static_cast<double>(sem_n);
  return r;
}

MetricReport evaluate(const std::vector<EventInstance>& instances, const Questioner& questioner,
                      const Backend& qa, const Embedder& embedder, EvalSetting setting,
                      const EvalOptions& opts, std::vector<InstanceScore>* details) {
  std::vector<EventInstance> used;
  for (const auto& inst : instances)
    if (setting == EvalSetting::full || inst.answerable()) used.push_back(inst);
  const FewshotBank& bank = opts.qa_bank ? *opts.qa_bank : qa_fewshot_bank();
  auto scores = parallel_map<InstanceScore>(used.size(), opts.jobs, [&](std::size_t i) {
    return score_instance(used[i], questioner, qa, embedder, bank, opts.qa_shots);
  });
  MetricReport r = aggregate(used, scores, setting);
  r.label = opts.label;
  r.embedder = embedder.identity();
  r.config_hash = opts.config_hash;
  if (details) *details = std::move(scores);
  return r;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const char* kFooter =
    "SemSim compares the gold and predicted answer renderings with the corpus-fitted embedder; "
    "absolute values are not comparable across papers.";

}  // namespace

ComparisonTable compare_methods(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw Error("no reports to compare");
  ComparisonTable t;
  t.setting = reports.front().setting;
  t.config_hash = reports.front().config_hash;
  t.embedder = reports.front().embedder;
  for (const auto& r : reports) {
    if (r.setting != t.setting) throw Error("cannot compare reports from different eval settings");
    t.rows.push_back({r.label, r.em, r.cor, r.semsim});
  }
  auto mark = [&](const char* name, double ComparisonRow::*value, bool ComparisonRow::*flag) {
    double best = -1.0;
    for (const auto& row : t.rows) best = std::max(best, round2(row.*value));
    std::vector<std::string> winners;
    for (auto& row : t.rows) {
      if (round2(row.*value) == best) {
        row.*flag = true;
        winners.push_back(row.label);
      }
    }
    if (winners.size() > 1) {
      std::string note = std::string(name) + ": tie between ";
      for (std::size_t i = 0; i < winners.size(); ++i) note += (i ? ", " : "") + winners[i];
      t.ties.push_back(note);
    }
  };
  mark("EM", &ComparisonRow::em, &ComparisonRow::best_em);
  mark("COR", &ComparisonRow::cor, &ComparisonRow::best_cor);
  mark("SemSim", &ComparisonRow::semsim, &ComparisonRow::best_semsim);
  return t;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  if (text == "json") return ReportFormat::json;
  if (text == "csv") return ReportFormat::csv;
  throw ConfigError("unknown report format '" + std::string(text) + "'");
}

std::string render_report(const MetricReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return r.to_json().dump(2) + "\n";
    case ReportFormat::csv:
      return "method,setting,instances,answerable,unanswerable,skipped,em,cor,semsim\n" + csv_field(r.label) +
             "," + to_string(r.setting) + "," + std::to_string(r.instances) + "," + std::to_string(r.answerable) +
             "," + std::to_string(r.unanswerable) + "," + std::to_string(r.skipped) + "," + fixed2(r.em) + "," +
             fixed2(r.cor) + "," + fixed2(r.semsim) + "\n";
    case ReportFormat::markdown:
      break;
  }
  std::ostringstream os;
  os << "## " << r.label << " (" << to_string(r.setting) << ")\n\n"
     << "| Method | EM | COR | SemSim |\n|---|---:|---:|---:|\n"
     << "| " << r.label << " | " << fixed2(r.em) << " | " << fixed2(r.cor) << " | " << fixed2(r.semsim) << " |\n\n"
     << "instances " << r.instances << ", answerable " << r.answerable << ", unanswerable " << r.unanswerable
     << ", skipped " << r.skipped << ", SemSim skipped " << r.semsim_skipped << "\n\n"
     << "config " << r.config_hash << ", embedder " << r.embedder << "\n\n"
     << kFooter << "\n";
  return os.str();
}

std::string render_table(const ComparisonTable& t, ReportFormat format) {
  if (format == ReportFormat::json) {
    json rows = json::array();
    for (const auto& r : t.rows)
      rows.push_back({{"method", r.label}, {"em", r.em}, {"cor", r.cor}, {"semsim", r.semsim},
                      {"best", {{"em", r.best_em}, {"cor", r.best_cor}, {"semsim", r.best_semsim}}}});
    return json{{"setting", to_string(t.setting)}, {"rows", rows}, {"ties", t.ties},
                {"config_hash", t.config_hash}, {"embedder", t.embedder}}
               .dump(2) +
           "\n";
  }
  if (format == ReportFormat::csv) {
    std::string out = "method,em,cor,semsim,best_em,best_cor,best_semsim\n";
    for (const auto& r : t.rows)
      out += csv_field(r.label) + "," + fixed2(r.em) + "," + fixed2(r.cor) + "," + fixed2(r.semsim) + "," +
             (r.best_em ? "1" : "0") + "," + (r.best_cor ? "1" : "0") + "," + (r.best_semsim ? "1" : "0") + "\n";
    return out;
  }
  auto cell = [](double v, bool best) { return best ? "**" + fixed2(v) + "**" : fixed2(v); };
  std::ostringstream os;
  os << "| Method | EM | COR | SemSim |\n|---|---:|---:|---:|\n";
  for (const auto& r : t.rows)
    os << "| " << r.label << " | " << cell(r.em, r.best_em) << " | " << cell(r.cor, r.best_cor) << " | "
       << cell(r.semsim, r.best_semsim) << " |\n";
  os << "\nSetting: " << to_string(t.setting) << ". Best per column in bold.\n";
  for (const auto& tie : t.ties) os << "\n" << tie;
  if (!t.ties.empty()) os << "\n";
  os << "\nconfig " << t.config_hash << ", embedder " << t.embedder << "\n\n" << kFooter << "\n";
  return os.str();
}

void emit_report(const MetricReport& report, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, render_report(report, format));
}

void emit_table(const ComparisonTable& table, ReportFormat format, const std::filesystem::path& path) {
  write_text_file(path, render_table(table, format));
}

MetricReport load_report(const std::filesystem::path& path) {
  try {
    return MetricReport::from_json(json::parse(read_text_file(path)));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace rlqg
