#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "rlqg/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"rlqg: question generation for event extraction, refined with preference RL"};
  app.require_subcommand(1, 1);

  std::string config_path;
  rlqg::ConfigOverrides overrides;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stage (default 42)");
  auto* out_opt = app.add_option("--out", out, "Output directory");
  auto* jobs_opt = app.add_option("--jobs", jobs, "Worker threads for backend calls")->check(CLI::PositiveNumber);
  app.add_option("--config", config_path, "JSON run config")->check(CLI::ExistingFile);
  app.add_flag("--offline", overrides.offline, "Serve remote calls from cassettes only");
  app.add_flag("--force", overrides.force, "Accept artifacts written under another config");

  const std::map<std::string, std::string> help = {
      {"synth", "Generate the synthetic corpus and ontology"},
      {"ingest", "Load a native, DyGIE++ or RAMS corpus"},
      {"sft", "Fine-tune the question generator on template questions"},
      {"augment", "Beam-search candidate questions per training instance"},
      {"pairs", "Score candidates and keep gated preference pairs"},
      {"train-rm", "Train the reward model on the preference pairs"},
      {"ppo", "Refine the SFT policy against the reward model"},
      {"ask", "Generate a question and answer it for one context"},
      {"eval", "Compare template, SFT and RL questioners"},
      {"e2e", "Run every stage in order"}};
  rlqg::AskRequest ask;
  for (const auto& name : rlqg::subcommand_names()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    if (name == "ask") {
      sub->add_option("--question", ask.question, "Question to answer");
      sub->add_option("--role", ask.role, "Role to ask about");
      sub->add_option("--trigger", ask.trigger, "Event trigger");
      sub->add_option("--context", ask.context, "Context passage")->required();
      sub->add_option("--policy", ask.policy, "Policy writing the question: rl or sft");
    }
  }
  app.fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : rlqg::kExitConfig;
  }
  if (*seed_opt) overrides.seed = seed;
  if (*out_opt) overrides.out = out;
  if (*jobs_opt) overrides.jobs = jobs;

  rlqg::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = rlqg::load_config(config_path);
    rlqg::apply_overrides(cfg, overrides);
  } catch (const rlqg::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return rlqg::kExitConfig;
  }
  return rlqg::run_subcommand(app.get_subcommands().front()->get_name(), cfg, std::cout, std::cerr, ask);
}
