#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace dtdr {

using ToolName = std::string;

/// Padding sentinel for history keys shorter than the graph order.
inline constexpr std::string_view kStartTool = "start";
/// Canonical terminal tool. Every plan ends with it.
inline constexpr std::string_view kEndTool = "end";

struct ParamSpec {
  std::string name;
  std::string type;
  bool optional = false;
  std::string description;

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct ToolSpec {
  ToolName name;
  std::string description;
  std::vector<ParamSpec> parameters;

  const ParamSpec* find_param(std::string_view param) const;

  friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

/// The tool universe. Ordinals are positions in `tools()` and are used as
/// the deterministic tie-break everywhere a ranking is produced.
class ToolCatalog {
 public:
  ToolCatalog() = default;

  /// Validates names (non-empty, unique, not "start", no '|'), parameter
  /// uniqueness, and that "end" is present. `terminal_alias` records the
  /// dataset-native name of the terminal tool (e.g. "join"), if it differed.
  explicit ToolCatalog(std::vector<ToolSpec> tools,
                       std::string terminal_alias = {});

  std::size_t size() const noexcept { return tools_.size(); }
  /// Number of tools excluding the terminal.
  std::size_t user_tool_count() const noexcept {
    return tools_.empty() ? 0 : tools_.size() - 1;
  }
  bool empty() const noexcept { return tools_.empty(); }

  const std::vector<ToolSpec>& tools() const noexcept { return tools_; }
  const ToolSpec& at(std::size_t ordinal) const { return tools_.at(ordinal); }
  /// Throws UnknownTool.
  const ToolSpec& get(std::string_view name) const;

  std::optional<std::size_t> ordinal(std::string_view name) const;
  /// Throws UnknownTool.
  std::size_t ordinal_of(std::string_view name) const;
  bool contains(std::string_view name) const {
    return ordinal(name).has_value();
  }

  const std::string& terminal_alias() const noexcept { return terminal_alias_; }
  /// Name shown to an LLM: the terminal is rendered under its native alias.
  std::string display_name(std::string_view name) const;
  /// Resolves a native alias ("join") back to the canonical name ("end").
  std::string canonical_name(std::string_view name) const;

  std::vector<ToolName> names() const;
  /// Stable 64-bit FNV-1a digest over names and parameter signatures, as hex.
  std::string fingerprint() const;
  std::size_t longest_name() const;

 private:
  std::vector<ToolSpec> tools_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::string terminal_alias_;
};

struct Literal {
  std::string value;
  friend bool operator==(const Literal&, const Literal&) = default;
};

/// Reference to the output of an earlier call, by 0-based step index.
/// Rendered in prompts as the 1-based variable `out_<step+1>`.
struct OutputRef {
  std::size_t step = 0;
  std::string label() const { return "out_" + std::to_string(step + 1); }
  friend bool operator==(const OutputRef&, const OutputRef&) = default;
};

using ArgValue = std::variant<Literal, OutputRef>;
using Arguments = std::map<std::string, ArgValue>;

struct FunctionCall {
  std::size_t step = 0;
  ToolName tool;
  Arguments arguments;

  friend bool operator==(const FunctionCall&, const FunctionCall&) = default;
};

struct PlanDag {
  struct Node {
    std::size_t step = 0;
    ToolName tool;
    friend bool operator==(const Node&, const Node&) = default;
  };
  using Edge = std::pair<std::size_t, std::size_t>;  // (producer, consumer)

  std::vector<Node> nodes;
  std::vector<Edge> edges;  // sorted, unique

  std::vector<std::size_t> producers(std::size_t step) const;
};

/// Throws MalformedRef when an OutputRef points at the same or a later step
/// or outside the plan, or when call steps are not 0..n-1 in order.
PlanDag build_plan_dag(std::span<const FunctionCall> calls);

/// Topological frontier of `dag` given the executed steps. The terminal enters
/// only once every other node has executed. Names are deduplicated.
std::set<ToolName> acceptable_next_tools(const PlanDag& dag,
                                         const std::set<std::size_t>& executed);

/// Acceptable set after executing the prefix [0, t).
std::set<ToolName> acceptable_after_prefix(const PlanDag& dag, std::size_t t);

class Plan {
 public:
  Plan() = default;
  /// Validates refs and that the last call is "end".
  explicit Plan(std::vector<FunctionCall> calls);

  const std::vector<FunctionCall>& calls() const noexcept { return calls_; }
  const PlanDag& dag() const noexcept { return dag_; }
  std::size_t size() const noexcept { return calls_.size(); }
  std::vector<ToolName> tool_sequence() const;

 private:
  std::vector<FunctionCall> calls_;
  PlanDag dag_;
};

struct Demonstration {
  std::string query;
  Plan plan;
};

/// Sliding window over the most recent tool names. `position()` counts every
/// call pushed, including those truncated away.
class History {
 public:
  explicit History(std::size_t window = 3) : window_(window) {}
  History(std::span<const ToolName> calls, std::size_t window);

  void push(ToolName tool);

  const std::vector<ToolName>& calls() const noexcept { return calls_; }
  std::size_t window() const noexcept { return window_; }
  std::size_t position() const noexcept { return position_; }
  bool empty() const noexcept { return calls_.empty(); }

 private:
  std::size_t window_;
  std::size_t position_ = 0;
  std::vector<ToolName> calls_;
};

struct ScoredTool {
  ToolName name;
  double probability = 0.0;
  friend bool operator==(const ScoredTool&, const ScoredTool&) = default;
};

/// Normalized retrieval output, ordered by descending probability. Ties are
/// broken by catalog ordinal, or by an explicit tie rank when one is given.
class RetrievalResult {
 public:
  RetrievalResult() = default;

  /// Builds a result from non-negative weights. Zero weights are dropped and
  /// the rest normalized to sum to one. Throws UnknownTool for names missing
  /// from `catalog` and std::invalid_argument for negative/non-finite weights.
  /// `tie_rank`, when non-empty, is indexed by catalog ordinal.
  static RetrievalResult from_weights(
      const ToolCatalog& catalog,
      std::span<const std::pair<ToolName, double>> weights,
      std::span<const std::size_t> tie_rank = {});

  /// Takes an already sorted, normalized ranking as is.
  static RetrievalResult from_ranking(std::vector<ScoredTool> ranking);

  /// Uniform distribution over every catalog tool.
  static RetrievalResult uniform(const ToolCatalog& catalog);

  const std::vector<ScoredTool>& ranking() const noexcept { return ranking_; }
  bool empty() const noexcept { return ranking_.empty(); }
  std::size_t size() const noexcept { return ranking_.size(); }
  double probability(std::string_view tool) const;
  bool contains(std::string_view tool) const;
  std::vector<ToolName> support() const;
  std::optional<ToolName> top() const;

  /// The lookup missed and shorter keys (or uniform) were used.
  bool backed_off() const noexcept { return backed_off_; }
  /// A post-filter left nothing and the unfiltered distribution was returned.
  bool fallback() const noexcept { return fallback_; }
  void set_backed_off(bool v) noexcept { backed_off_ = v; }
  void set_fallback(bool v) noexcept { fallback_ = v; }

  friend bool operator==(const RetrievalResult&,
                         const RetrievalResult&) = default;

 private:
  std::vector<ScoredTool> ranking_;
  bool backed_off_ = false;
  bool fallback_ = false;
};

}  // namespace dtdr
