#include <gtest/gtest.h>

#include "rlqg/evalharness.hpp"
#include "support.hpp"

using namespace rlqg;

namespace {

EventInstance inst(const std::string& id, std::vector<std::string> golds, const std::string& role = "attacker") {
  EventInstance i;
  i.id = id;
  i.context = "Marines attacked insurgents in Falluja.";
  i.trigger = {"attacked", 8, 16};
  i.event_type = "Conflict.Attack";
  i.role = role;
  i.gold_answers = std::move(golds);
  return i;
}

// QA stub answering from a fixed question -> output map keyed by the instance id in the question.
Questioner id_questioner() {
  return [](const EventInstance& i) { return "Q" + i.id + "?"; };
}

ScriptedTableBackend table_qa(const std::vector<EventInstance>& instances,
                              const std::map<std::string, std::string>& answers) {
  std::map<std::string, std::string> t;
  for (const auto& i : instances)
    if (answers.contains(i.id)) t[qa_user_turn("Q" + i.id + "?", i.context)] = answers.at(i.id);
  return ScriptedTableBackend(t);
}

MetricReport report(const std::string& label, double em, double cor, double sem) {
  MetricReport r;
  r.label = label;
  r.em = em;
  r.cor = cor;
  r.semsim = sem;
  return r;
}

}  // namespace

TEST(Evaluate, PerfectAndNoneOracles) {
  const std::vector<EventInstance> data = {inst("1", {"Marines"}), inst("2", {"insurgents"}),
                                           inst("3", {}, "place")};
  const auto e = fit_default_embedder({data[0].context});
  auto perfect = table_qa(data, {{"1", "[ANS] Marines [/ANS]"}, {"2", "[ANS] insurgents [/ANS]"},
                                 {"3", "[ANS] None [/ANS]"}});
  const auto full = evaluate(data, id_questioner(), perfect, e, EvalSetting::full);
  EXPECT_DOUBLE_EQ(full.em, 100.0);
  EXPECT_DOUBLE_EQ(full.cor, 100.0);
  EXPECT_DOUBLE_EQ(full.semsim, 100.0);
  EXPECT_EQ(full.unanswerable, 1u);
  EXPECT_EQ(full.semsim_skipped, 1u);

  auto none = table_qa(data, {{"1", "[ANS] None [/ANS]"}, {"2", "[ANS] None [/ANS]"}, {"3", "[ANS] None [/ANS]"}});
  const auto practical = evaluate(data, id_questioner(), none, e, EvalSetting::practical);
  EXPECT_EQ(practical.instances, 2u);
  EXPECT_EQ(practical.em, 0.0);
  EXPECT_EQ(practical.cor, 0.0);
  EXPECT_EQ(practical.semsim, 0.0);
  const auto full_none = evaluate(data, id_questioner(), none, e, EvalSetting::full);
  EXPECT_NEAR(full_none.em, 100.0 / 3.0, 1e-12);
}

TEST(Evaluate, SkipsFailuresAndKeepsDetails) {
  const std::vector<EventInstance> data = {inst("1", {"Marines"}), inst("2", {"insurgents"})};
  const auto e = fit_default_embedder({data[0].context});
  auto qa = table_qa(data, {{"1", "[ANS] the Marines [/ANS]"}});  // no entry for 2
  std::vector<InstanceScore> details;
  EvalOptions opts;
  opts.label = "m";
  opts.jobs = 2;
  const auto r = evaluate(data, id_questioner(), qa, e, EvalSetting::practical, opts, &details);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_DOUBLE_EQ(r.cor, 50.0);
  EXPECT_EQ(r.em, 0.0);
  ASSERT_EQ(details.size(), 2u);
  EXPECT_EQ(details[0].answer, "the Marines");
  EXPECT_TRUE(details[1].skipped);
  EXPECT_FALSE(details[1].error.empty());
  EXPECT_EQ(r.label, "m");

  const Questioner throws = [](const EventInstance&) -> std::string { throw Error("no question"); };
  EXPECT_EQ(evaluate(data, throws, qa, e, EvalSetting::practical).skipped, 2u);
}

TEST(Aggregate, MatchesHandComputedMeans) {
  const std::vector<EventInstance> data = {inst("1", {"a"}), inst("2", {"b"}), inst("3", {}), inst("4", {"d"})};
  std::vector<InstanceScore> s(4);
  s[0] = {"1", "q", "a", false, "", true, 1.0, 0.8};
  s[1] = {"2", "q", "x", false, "", false, 0.5, 0.4};
  s[2] = {"3", "q", "None", false, "", true, 1.0, std::nullopt};
  s[3] = {"4", "q", "", true, "boom", false, 0.0, std::nullopt};
  const auto r = aggregate(data, s, EvalSetting::full);
  EXPECT_DOUBLE_EQ(r.em, 100.0 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.cor, 100.0 * 2.5 / 3.0);
  EXPECT_DOUBLE_EQ(r.semsim, 100.0 * 1.2 / 2.0);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_EQ(r.semsim_skipped, 1u);
  EXPECT_EQ(r.answerable, 3u);
  EXPECT_THROW(aggregate(data, {}, EvalSetting::full), Error);
}

TEST(Compare, MarksBestAndTies) {
  const auto t = compare_methods({report("Template", 10, 70.451, 50), report("SFT", 20, 70.449, 40),
                                  report("RLQG", 30, 60, 45)});
  EXPECT_TRUE(t.rows[2].best_em);
  EXPECT_FALSE(t.rows[0].best_em);
  EXPECT_TRUE(t.rows[0].best_cor);
  EXPECT_TRUE(t.rows[1].best_cor);
  EXPECT_TRUE(t.rows[0].best_semsim);
  ASSERT_EQ(t.ties.size(), 1u);
  EXPECT_EQ(t.ties[0], "COR: tie between Template, SFT");
  const std::string md = render_table(t, ReportFormat::markdown);
  EXPECT_NE(md.find("| RLQG | **30.00** | 60.00 | 45.00 |"), std::string::npos) << md;
  EXPECT_NE(md.find("COR: tie between Template, SFT"), std::string::npos);
}

TEST(Compare, RejectsMixedSettings) {
  auto a = report("A", 1, 1, 1);
  auto b = report("B", 1, 1, 1);
  b.setting = EvalSetting::full;
  EXPECT_THROW(compare_methods({a, b}), Error);
  EXPECT_THROW(compare_methods({}), Error);
}

TEST(Emit, DeterministicFormatsAndRoundTrip) {
  auto r = report("RLQG, v1", 12.3456, 45.6, 78.9);
  r.instances = 10;
  r.answerable = 10;
  r.config_hash = "abc";
  r.embedder = "tfidf:x";
  const auto dir = test::temp_dir("emit");
  for (auto f : {ReportFormat::markdown, ReportFormat::json, ReportFormat::csv}) {
    emit_report(r, f, dir / "a");
    emit_report(r, f, dir / "b");
    EXPECT_EQ(read_text_file(dir / "a"), read_text_file(dir / "b"));
  }
  emit_report(r, ReportFormat::json, dir / "r.json");
  EXPECT_EQ(load_report(dir / "r.json"), r);
  const std::string csv = render_report(r, ReportFormat::csv);
  EXPECT_NE(csv.find("\"RLQG, v1\""), std::string::npos);
  EXPECT_NE(csv.find(",12.35,45.60,78.90"), std::string::npos);

  const auto t = compare_methods({r, report("SFT", 1, 2, 3), report("Template", 0, 0, 0)});
  const std::string tcsv = render_table(t, ReportFormat::csv);
  EXPECT_EQ(std::count(tcsv.begin(), tcsv.end(), '\n'), 4);
  EXPECT_EQ(json::parse(render_table(t, ReportFormat::json))["rows"].size(), 3u);
  EXPECT_EQ(parse_report_format("csv"), ReportFormat::csv);
  EXPECT_THROW(parse_report_format("xml"), Error);
}

TEST(Settings, PracticalIsTheAnswerableRestrictionOfFull) {
  const Corpus c = generate_synthetic_corpus(3, 60, synthetic_ontology());
  const auto full_data = expand_full_eval(c);
  const auto e = fit_default_embedder({c.instances[0].context});
  LexicalReaderBackend reader(c);
  const auto q = template_questioner(TemplateStyle::standard, c.ontology);
  std::vector<InstanceScore> full_details, practical_details;
  evaluate(full_data, q, reader, e, EvalSetting::full, {}, &full_details);
  const auto practical = evaluate(full_data, q, reader, e, EvalSetting::practical, {}, &practical_details);
  std::vector<EventInstance> answerable;
  std::vector<InstanceScore> restricted;
  for (std::size_t i = 0; i < full_data.size(); ++i) {
    if (!full_data[i].answerable()) continue;
    answerable.push_back(full_data[i]);
    restricted.push_back(full_details[i]);
  }
  const auto recomputed = aggregate(answerable, restricted, EvalSetting::practical);
  EXPECT_DOUBLE_EQ(recomputed.em, practical.em);
  EXPECT_DOUBLE_EQ(recomputed.cor, practical.cor);
  EXPECT_DOUBLE_EQ(recomputed.semsim, practical.semsim);
  EXPECT_EQ(practical.instances, answerable.size());
}
