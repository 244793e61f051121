#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/agent.hpp"
#include "dtdr/model.hpp"

namespace dtdr {

/// The retrieved ranking followed by every unretrieved catalog tool in
/// catalog order.
std::vector<ToolName> extended_ranking(const RetrievalResult& retrieved, const ToolCatalog& catalog);

/// 1 / (1-based rank of the best acceptable tool) in the extended ranking;
/// 0 when no acceptable tool is in the catalog.
double mrr_at_step(const RetrievalResult& retrieved, const std::set<ToolName>& acceptable,
                   const ToolCatalog& catalog);

/// F1 of the top-k of the extended ranking against the acceptable set, with
/// k = |acceptable|.
double f1_at_k(const RetrievalResult& retrieved, const std::set<ToolName>& acceptable,
               const ToolCatalog& catalog);

/// Fraction of records whose selection is in the acceptable set. Records
/// without a selection are ignored; nullopt when none has one.
std::optional<double> fsa(std::span<const StepRecord> records);

/// True iff some bijection between the predicted calls and the plan's calls
/// preserves tool names and arguments, with literals compared after trimming
/// and ASCII case-folding and references mapped through the bijection.
/// Since edges come from references, this also preserves the DAG.
bool plan_success(std::span<const FunctionCall> predicted, const Plan& truth);

struct PlanRecord {
  std::string query_id;
  bool success = false;
};

struct PromptSummary {
  double constant_chars = 0.0;
  double variable_chars = 0.0;
  double total_chars = 0.0;
  double constant_tokens = 0.0;
  double variable_tokens = 0.0;
  double total_tokens = 0.0;
};

struct EvalReport {
  std::size_t steps = 0;
  std::size_t plans = 0;
  std::optional<double> mrr;  // nullopt without scored steps
  std::optional<double> f1;
  std::optional<double> fsa;
  std::optional<double> success_rate;
  std::optional<PromptSummary> prompt;
  double mean_retrieved = 0.0;  // support size
  double backoff_rate = 0.0;
  double fallback_rate = 0.0;
};

/// Means over step records (MRR, F1, FSA, prompt sizes, diagnostics) and plan
/// records (success rate). Steps with an empty acceptable set are skipped for
/// MRR/F1. Throws EmptyEval when both inputs are empty.
EvalReport aggregate(std::span<const StepRecord> records, std::span<const PlanRecord> plans,
                     const ToolCatalog& catalog);

/// One report row: labels plus metrics.
struct ReportRow {
  std::string dataset;
  std::string method;
  std::string model;
  std::string icl;
  std::string sweep_param;
  std::string sweep_value;
  EvalReport report;
};

std::string report_to_json(std::span<const ReportRow> rows);
/// Inverse of report_to_json. Throws SchemaError.
std::vector<ReportRow> report_from_json(std::string_view text, std::string_view locus = "report.json");
std::string report_to_csv(std::span<const ReportRow> rows);
std::string csv_header();

}  // namespace dtdr
