#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rlqg/backends.hpp"

namespace rlqg {

/// practical: answerable roles only. full: every ontology role, the input
/// having been expanded with expand_full_eval.
enum class EvalSetting { practical, full };
std::string to_string(EvalSetting s);
EvalSetting parse_eval_setting(std::string_view text);

struct MetricReport {
  std::string label;
  EvalSetting setting = EvalSetting::practical;
  std::size_t instances = 0;
  std::size_t answerable = 0;
  std::size_t unanswerable = 0;
  std::size_t skipped = 0;         // QA or question failures, excluded from every mean
  std::size_t semsim_skipped = 0;  // unanswerable instances (SemSim undefined)
  double em = 0.0;                 // percentages in [0, 100]
  double cor = 0.0;
  double semsim = 0.0;
  std::string embedder;
  std::string config_hash;

  json to_json() const;
  static MetricReport from_json(const json& doc);
  bool operator==(const MetricReport&) const = default;
};

struct InstanceScore {
  std::string id;
  std::string question;
  std::string answer;  // rendered prediction
  bool skipped = false;
  std::string error;
  bool em = false;
  double cor = 0.0;
  std::optional<double> semsim;  // unset for unanswerable or skipped
};

/// Produces the question posed for an instance. Throwing Error skips it.
using Questioner = std::function<std::string(const EventInstance&)>;

Questioner template_questioner(TemplateStyle style, const RoleOntology& ontology);
/// Contextual pattern when the ontology has one, else the standard template.
Questioner contextual_questioner(const RoleOntology& ontology);
/// Greedy (or configured) decoding of the QG prompt with a toy policy.
Questioner policy_questioner(std::shared_ptr<const Policy> policy, DecodeConfig decode);
/// Asks a backend with the QG few-shot transcript.
Questioner backend_questioner(const Backend& backend, int shots);

struct EvalOptions {
  std::string label = "method";
  const FewshotBank* qa_bank = nullptr;  // defaults to the built-in QA bank
  int qa_shots = 5;
  std::size_t jobs = 1;
  std::string config_hash;
};

/// Poses each question to `qa` and scores EM, COR and SemSim(gold, prediction)
/// as percentages. The practical setting drops unanswerable instances first.
MetricReport evaluate(const std::vector<EventInstance>& instances, const Questioner& questioner,
                      const Backend& qa, const Embedder& embedder, EvalSetting setting,
                      const EvalOptions& opts = {}, std::vector<InstanceScore>* details = nullptr);

/// Aggregates per-instance scores in input order.
MetricReport aggregate(const std::vector<EventInstance>& instances,
                       const std::vector<InstanceScore>& scores, EvalSetting setting);

struct ComparisonRow {
  std::string label;
  double em = 0.0, cor = 0.0, semsim = 0.0;
  bool best_em = false, best_cor = false, best_semsim = false;
};

struct ComparisonTable {
  EvalSetting setting = EvalSetting::practical;
  std::vector<ComparisonRow> rows;
  std::vector<std::string> ties;  // e.g. "COR: tie between A, B"
  std::string config_hash;
  std::string embedder;
};

/// One row per report; the best value of each column is marked, and every
/// row reaching it (at two decimals) is marked on a tie.
ComparisonTable compare_methods(const std::vector<MetricReport>& reports);

enum class ReportFormat { markdown, json, csv };
ReportFormat parse_report_format(std::string_view text);

std::string render_report(const MetricReport& report, ReportFormat format);
std::string render_table(const ComparisonTable& table, ReportFormat format);
void emit_report(const MetricReport& report, ReportFormat format, const std::filesystem::path& path);
void emit_table(const ComparisonTable& table, ReportFormat format, const std::filesystem::path& path);
MetricReport load_report(const std::filesystem::path& path);

}  // namespace rlqg
