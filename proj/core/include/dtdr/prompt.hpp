#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/model.hpp"

namespace dtdr {

/// A prompt split into the part that can be cached across queries and the
/// part rebuilt for every step. The full prompt is constant + variable.
struct PromptParts {
  std::string constant_text;
  std::string variable_text;

  std::string text() const { return constant_text + variable_text; }
  std::size_t total_chars() const noexcept {
    return constant_text.size() + variable_text.size();
  }
  std::size_t constant_tokens() const noexcept;
  std::size_t variable_tokens() const noexcept;
  std::size_t total_tokens_estimate() const noexcept {
    return constant_tokens() + variable_tokens();
  }
};

enum class IclKind { no_icl, raw_demos, hard_mask, soft_mask };

struct IclStrategy {
  IclKind kind = IclKind::hard_mask;
  bool weighted = false;  // masks only
  std::size_t max_demos = 5;

  bool needs_retrieval() const noexcept {
    return kind == IclKind::hard_mask || kind == IclKind::soft_mask;
  }
};

/// "no_icl", "raw_demos", "hard_mask", "hard_mask_weighted", "soft_mask",
/// "soft_mask_weighted". Throws std::invalid_argument.
IclStrategy parse_icl_strategy(std::string_view tag);
std::string to_string(const IclStrategy& strategy);

/// Named prompt templates with {{placeholder}} substitution.
class PromptTemplates {
 public:
  /// The templates compiled into the library.
  static PromptTemplates defaults();
  /// Defaults overridden by any `<name>.txt` present in `dir`.
  static PromptTemplates with_overrides(const std::filesystem::path& dir);

  const std::string& raw(std::string_view name) const;
  /// Throws TemplateError for unknown templates or unbound placeholders.
  std::string render(std::string_view name,
                     const std::map<std::string, std::string>& vars) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

/// The single demonstration shown in every selection prompt: a plan prefix
/// and the call that comes next.
struct WorkedExample {
  std::string query;
  std::vector<FunctionCall> executed;
  ToolName answer;
};

/// Seeded choice of demo and step; nullopt for an empty pool.
std::optional<WorkedExample> pick_worked_example(std::span<const Demonstration> pool,
                                                 std::uint64_t seed);

struct SelectionInput {
  const ToolCatalog* catalog = nullptr;
  std::string_view query;
  std::span<const FunctionCall> executed;
  const RetrievalResult* retrieved = nullptr;
  /// Key shown in soft-mask guidance, e.g. {"start", "create_note"}.
  std::span<const ToolName> history_key;
  std::span<const Demonstration> demo_pool;  // raw_demos
  const WorkedExample* example = nullptr;
  std::uint64_t demo_seed = 0;
};

/// Throws MissingRetrieval when a retrieval-driven strategy gets no result.
PromptParts build_selection_prompt(const SelectionInput& input, const IclStrategy& strategy,
                                   const PromptTemplates& templates);

struct ParamFillInput {
  const ToolCatalog* catalog = nullptr;
  std::string_view query;
  std::span<const FunctionCall> executed;
  ToolName target;
  /// Source of a same-tool example; a generic one is used when none match.
  std::span<const Demonstration> demo_pool;
  std::uint64_t seed = 0;
};

/// Throws UnknownTool.
PromptParts build_paramfill_prompt(const ParamFillInput& input, const PromptTemplates& templates);

/// Strict: after trimming surrounding whitespace, quotes, backticks and
/// punctuation (and a trailing "()"), the text must equal a tool name or the
/// terminal alias, case-insensitively. Returns the canonical name.
/// Throws UnparseableSelection.
ToolName parse_selection_output(std::string_view text, const ToolCatalog& catalog);

/// Parses "a=x, b=out_2". Bare out_<k> becomes a reference to call k
/// (1-based); quoted values are literals. Throws UnparseableArgs for unknown
/// or repeated names and malformed pieces. Missing parameters are allowed.
Arguments parse_paramfill_output(std::string_view text, const ToolSpec& signature);

// -- rendering helpers --------------------------------------------------------

/// Python repr of a str.
std::string python_str(std::string_view s);
/// "[{'function': 'a', 'description': '...'}, ...]", optionally with the
/// rounded 'probability' of each entry.
std::string render_tool_list(const ToolCatalog& catalog, std::span<const ToolName> names,
                             std::span<const double> probabilities = {});
/// "out_2 = tool(param='value', other='out_1')"
std::string render_call(const FunctionCall& call, const ToolCatalog& catalog);
/// " None" for an empty plan, else a newline then one call per line.
std::string render_executed_plan(std::span<const FunctionCall> calls, const ToolCatalog& catalog);
/// "name=Vacation Plans, append_content=out_3" in signature order.
std::string render_arguments(const Arguments& args, const ToolSpec& signature);
/// "[name: 'x', type: 'str', is_optional: 'False', description: ''], ..."
std::string render_signature(const ToolSpec& tool);
/// Python tuple repr, e.g. "('start', 'create_note')".
std::string python_tuple(std::span<const std::string> items);

/// Largest-remainder rounding to thousandths; the result sums to 1000 when
/// the input is non-empty.
std::vector<int> round_to_thousandths(std::span<const double> probabilities);
/// 714 -> "0.714", 500 -> "0.5", 1000 -> "1.0".
std::string format_thousandths(int value);

}  // namespace dtdr
