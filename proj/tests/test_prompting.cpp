#include <gtest/gtest.h>

#include "rlqg/backends.hpp"
#include "rlqg/prompting.hpp"
#include "support.hpp"

using namespace rlqg;

TEST(Prompts, QgInverseAndQaFormats) {
  EventInstance inst;
  inst.id = "x";
  inst.context = "Warplanes pounded forward Iraqi positions.";
  inst.trigger = {"pounded", 10, 17};
  inst.role = "attacker";
  const auto p = build_qg_prompt(inst);
  EXPECT_EQ(p.text, "role: attacker trigger: pounded context: Warplanes pounded forward Iraqi positions.");
  EXPECT_EQ(p.kind, PromptKind::qg);
  EXPECT_EQ(p.provenance, "x");
  EXPECT_EQ(build_qg_prompt(inst), p);

  EXPECT_EQ(build_inverse_prompt("pounded", "Who pounded?").text, "trigger: pounded question: Who pounded?");
  EXPECT_EQ(qa_user_turn("Who pounded?", "ctx"), "question: Who pounded? context: ctx");
}

TEST(Templates, SimpleAndStandard) {
  RoleOntology o;
  o.event_types["Conflict.Attack"] = {"attacker", "place"};
  o.interrogatives = {{"attacker", Interrogative::who}, {"place", Interrogative::where}};
  EXPECT_EQ(render_template_question("attacker", "pounded", TemplateStyle::simple, o), "Who is the attacker?");
  EXPECT_EQ(render_template_question("place", "pounded", TemplateStyle::standard, o),
            "Where is the place in the pounded event?");
  EXPECT_THROW(render_template_question("weapon", "pounded", TemplateStyle::simple, o), CorpusError);
  EXPECT_THROW(parse_template_style("fancy"), ConfigError);
}

TEST(Templates, ContextualPattern) {
  RoleOntology o;
  o.event_types["Conflict.Attack"] = {"attacker"};
  o.interrogatives["attacker"] = Interrogative::who;
  o.contextual_templates["Conflict.Attack"]["attacker"] = "who {trigger} {after}?";
  EventInstance inst;
  inst.context = "Warplanes pounded forward Iraqi positions.";
  inst.trigger = {"pounded", 10, 17};
  inst.event_type = "Conflict.Attack";
  inst.role = "attacker";
  inst.gold_answers = {"Warplanes"};
  EXPECT_EQ(render_contextual_question(inst, o), std::optional<std::string>("Who pounded pounded?"));
  inst.role = "place";
  EXPECT_FALSE(render_contextual_question(inst, o).has_value());
}

TEST(Fewshot, AssemblyOrder) {
  const auto t0 = assemble_fewshot("sys", {}, "q");
  ASSERT_EQ(t0.turns.size(), 1u);
  EXPECT_TRUE(t0.valid());
  EXPECT_EQ(t0.query(), "q");

  const auto t = assemble_fewshot("sys", {{"u1", "a1"}, {"u2", "a2"}}, "q");
  ASSERT_EQ(t.turns.size(), 5u);
  EXPECT_EQ(t.turns[2], (ChatTurn{Speaker::user, "u2"}));
  EXPECT_EQ(t.turns[3], (ChatTurn{Speaker::assistant, "a2"}));
  EXPECT_EQ(t.render(), "System:\nsys\n\nUser:\nu1\nAssistant:\na1\n\nUser:\nu2\nAssistant:\na2\n\nUser:\nq\n");
  EXPECT_EQ(t.to_json()[0]["role"], "system");
  EXPECT_EQ(t.to_json().size(), 6u);

  ChatTranscript broken = t;
  broken.turns.pop_back();
  EXPECT_FALSE(broken.valid());
  EXPECT_THROW(broken.query(), Error);
}

TEST(Fewshot, BundledBanksMatchDataFiles) {
  const auto dir = test::source_dir() / "data" / "fewshot";
  EXPECT_EQ(FewshotBank::load(dir / "qa.json"), qa_fewshot_bank());
  EXPECT_EQ(FewshotBank::load(dir / "qg.json"), qg_fewshot_bank());
  EXPECT_EQ(FewshotBank::load(dir / "inverse.json"), inverse_fewshot_bank());
  EXPECT_EQ(qa_fewshot_bank().shots.size(), 5u);
  EXPECT_EQ(qg_fewshot_bank().shots.size(), 5u);
  EXPECT_EQ(inverse_fewshot_bank().shots.size(), 5u);
  EXPECT_EQ(FewshotBank::from_json(qa_fewshot_bank().to_json()), qa_fewshot_bank());
}

TEST(Answers, ParseTaggedCases) {
  EXPECT_EQ(parse_answer("[ANS] US [/ANS]").values, std::vector<std::string>{"US"});
  EXPECT_EQ(parse_answer("[ANS] Rangers, Matt Reersen [/ANS]").values,
            (std::vector<std::string>{"Rangers", "Matt Reersen"}));
  const auto none = parse_answer("[ANS] None [/ANS]");
  EXPECT_TRUE(none.none());
  EXPECT_FALSE(none.untagged);
  EXPECT_TRUE(parse_answer("[ANS] none [/ANS]").none());
  EXPECT_EQ(parse_answer("noise [ANS] a [/ANS] [ANS] b [/ANS]").values, std::vector<std::string>{"a"});
}

TEST(Answers, UntaggedFallback) {
  const auto a = parse_answer("  Marines \n");
  EXPECT_TRUE(a.untagged);
  EXPECT_EQ(a.values, std::vector<std::string>{"Marines"});
  EXPECT_EQ(a.raw, "  Marines \n");
}

TEST(Answers, WrapRoundTrip) {
  EXPECT_EQ(wrap_answer({"US"}), "[ANS] US [/ANS]");
  EXPECT_EQ(wrap_answer({}), "[ANS] None [/ANS]");
  for (const std::vector<std::string> v : {std::vector<std::string>{}, {"a"}, {"Rangers", "Matt Reersen"}})
    EXPECT_EQ(parse_answer(wrap_answer(v)).values, v);
  EXPECT_EQ(parse_answer(wrap_answer({"Rangers", "Matt Reersen"})).render(), "Rangers Matt Reersen");
  EXPECT_EQ(Answer{}.render(), "None");
}

TEST(Transcript, ZeroShotQa) {
  const auto t = qa_transcript("Who?", "ctx", qa_fewshot_bank(), 0);
  ASSERT_EQ(t.turns.size(), 1u);
  EXPECT_EQ(t.system, qa_fewshot_bank().system);
  EXPECT_EQ(t.query(), "question: Who? context: ctx");
}
