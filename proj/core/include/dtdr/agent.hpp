#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/model.hpp"
#include "dtdr/prompt.hpp"
#include "dtdr/retriever.hpp"

namespace dtdr {

/// Placeholder for a selection that could not be parsed. Never a member of an
/// acceptable set.
inline constexpr std::string_view kInvalidTool = "<INVALID>";

struct SelectionRequest {
  const PromptParts* prompt = nullptr;
  const RetrievalResult* retrieved = nullptr;
  const ToolCatalog* catalog = nullptr;
  std::string_view query;
  std::size_t step = 0;
};

struct ParamFillRequest {
  const PromptParts* prompt = nullptr;
  const ToolCatalog* catalog = nullptr;
  std::string_view query;
  std::size_t step = 0;
  ToolName target;
  const Plan* truth = nullptr;  // only the oracle looks at it
};

/// The function-calling agent. Both calls return raw model text.
class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  /// Throws BackendUnavailable.
  virtual std::string select(const SelectionRequest& request) const = 0;
  virtual std::string fill(const ParamFillRequest& request) const = 0;
  virtual std::string name() const = 0;
};

struct OracleConfig {
  double epsilon = 0.0;
  std::uint64_t seed = 5006;
};

/// With probability 1 - epsilon the top-ranked tool of `result`, otherwise a
/// uniform catalog tool. The draw is a pure function of (seed, draw_key).
ToolName oracle_select(const RetrievalResult& result, const ToolCatalog& catalog,
                       const OracleConfig& config, std::uint64_t draw_key);

/// LLM stand-in. Selection follows oracle_select; parameter filling echoes the
/// ground-truth arguments when the requested tool matches the truth at that
/// step and answers with nothing otherwise.
class OracleBackend final : public AgentBackend {
 public:
  explicit OracleBackend(OracleConfig config) : config_(config) {}

  std::string select(const SelectionRequest& request) const override;
  std::string fill(const ParamFillRequest& request) const override;
  std::string name() const override { return "oracle"; }

 private:
  OracleConfig config_;
};

struct ChatConfig {
  std::string endpoint;  // full URL of the chat-completions route
  std::string model;
  std::string api_key_env = "DTDR_API_KEY";
  std::string auth_header = "Authorization";  // value sent as "Bearer <key>"
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  int max_in_flight = 4;
  int paramfill_max_tokens = 256;
};

/// Single-turn system + user exchange with an OpenAI-style chat endpoint:
///   POST {"model", "messages", "temperature": 0, "max_tokens"}
///   -> choices[0].message.content
/// The constant prompt section is the system message, the variable section
/// the user message.
class ChatBackend final : public AgentBackend, public LlmClient {
 public:
  explicit ChatBackend(ChatConfig config);
  ~ChatBackend() override;

  std::string select(const SelectionRequest& request) const override;
  std::string fill(const ParamFillRequest& request) const override;
  std::string name() const override { return "remote:" + config_.model; }

  std::string complete(std::string_view system, std::string_view user,
                       int max_tokens) const override;

 private:
  struct State;
  ChatConfig config_;
  std::unique_ptr<State> state_;
};

enum class LoopMode { teacher_forced, free_running };

struct LoopConfig {
  std::size_t max_iters = 16;
  LoopMode mode = LoopMode::free_running;
  std::size_t history_len = 3;
};

/// Prompt size accounting kept per step instead of the full text.
struct PromptStats {
  std::size_t constant_chars = 0;
  std::size_t variable_chars = 0;
  std::size_t constant_tokens = 0;
  std::size_t variable_tokens = 0;

  static PromptStats of(const PromptParts& parts);
  std::size_t total_chars() const noexcept { return constant_chars + variable_chars; }
};

struct StepRecord {
  std::string query_id;
  std::size_t step = 0;
  std::set<ToolName> acceptable;
  RetrievalResult retrieved;
  std::optional<ToolName> selected;  // empty in retrieval-only runs
  std::optional<PromptStats> prompt;
};

/// Everything a loop needs besides the query itself.
struct AgentContext {
  const ToolCatalog* catalog = nullptr;
  const Retriever* retriever = nullptr;
  const AgentBackend* backend = nullptr;  // null: retrieval only
  const PromptTemplates* templates = nullptr;
  IclStrategy strategy;
  std::span<const Demonstration> demo_pool;
  const WorkedExample* example = nullptr;
  std::uint64_t seed = 5006;
};

struct Trajectory {
  std::vector<ToolName> tools;
  std::vector<StepRecord> steps;
  bool aborted = false;  // free-running stopped on an unparseable selection
};

/// Teacher-forced: one step per ground-truth call (capped at max_iters), the
/// history always the true prefix; requires `truth`. Free-running: the
/// history is the agent's own output; stops after "end", an unparseable
/// selection, or max_iters.
Trajectory select_trajectory(const AgentContext& ctx, std::string_view query_id,
                             std::string_view query, const Plan* truth,
                             const LoopConfig& config);

/// One backend call per trajectory entry. Unparseable answers, and answers
/// whose references do not point at earlier calls, become empty arguments.
std::vector<FunctionCall> fill_parameters(const AgentContext& ctx, std::string_view query,
                                          std::span<const ToolName> tools, const Plan* truth);

/// Padded key shown in soft-mask guidance: the last `n` names of the history,
/// left-filled with "start".
std::vector<ToolName> guidance_key(std::span<const ToolName> history, std::size_t n);

}  // namespace dtdr
