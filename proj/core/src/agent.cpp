#include "dtdr/agent.hpp"

#include <algorithm>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/rng.hpp"

namespace dtdr {

ToolName oracle_select(const RetrievalResult& result, const ToolCatalog& catalog,
                       const OracleConfig& config, std::uint64_t draw_key) {
  const std::uint64_t h = mix64(mix64(config.seed) ^ draw_key);
  const bool noisy = unit_from_key(h) < config.epsilon;
  if (!noisy && !result.empty()) return result.ranking().front().name;
  const double u = unit_from_key(mix64(h ^ 0x9e3779b97f4a7c15ULL));
  const auto idx = std::min(catalog.size() - 1,
                            static_cast<std::size_t>(u * static_cast<double>(catalog.size())));
  return catalog.at(idx).name;
}

namespace {

std::uint64_t step_key(std::string_view query, std::size_t step) {
  return mix64(fnv1a(query) + 0x51ed27ULL * (step + 1));
}

}  // namespace

std::string OracleBackend::select(const SelectionRequest& request) const {
  static const RetrievalResult kEmpty;
  const auto& result = request.retrieved ? *request.retrieved : kEmpty;
  return request.catalog->display_name(
      oracle_select(result, *request.catalog, config_, step_key(request.query, request.step)));
}

std::string OracleBackend::fill(const ParamFillRequest& request) const {
  if (!request.truth || request.step >= request.truth->size()) return {};
  const auto& call = request.truth->calls()[request.step];
  if (call.tool != request.target) return {};
  return render_arguments(call.arguments, request.catalog->get(call.tool));
}

PromptStats PromptStats::of(const PromptParts& parts) {
  return {parts.constant_text.size(), parts.variable_text.size(), parts.constant_tokens(),
          parts.variable_tokens()};
}

std::vector<ToolName> guidance_key(std::span<const ToolName> history, std::size_t n) {
  std::vector<ToolName> key(n, std::string(kStartTool));
  const std::size_t take = std::min(n, history.size());
  for (std::size_t i = 0; i < take; ++i) {
    key[n - take + i] = history[history.size() - take + i];
  }
  return key;
}

namespace {

void check_context(const AgentContext& ctx) {
  if (!ctx.catalog || !ctx.retriever) throw std::invalid_argument("agent context needs catalog and retriever");
  if (ctx.backend && !ctx.templates) throw std::invalid_argument("agent context needs templates");
}

}  // namespace

Trajectory select_trajectory(const AgentContext& ctx, std::string_view query_id,
                             std::string_view query, const Plan* truth,
                             const LoopConfig& config) {
  check_context(ctx);
  if (config.max_iters == 0) throw std::invalid_argument("max_iters must be >= 1");
  const bool forced = config.mode == LoopMode::teacher_forced;
  if (forced && !truth) throw std::invalid_argument("teacher forcing needs the ground-truth plan");

  const Retriever& retriever = *ctx.retriever;
  const std::size_t window = std::max(config.history_len, retriever.history_window());
  const std::size_t key_len = std::max<std::size_t>(1, retriever.history_window());

  Trajectory out;
  History history(window);
  std::vector<ToolName> full_history;  // untruncated, for guidance keys
  std::vector<FunctionCall> executed;
  std::optional<RetrievalResult> cached;

  const std::size_t steps = forced ? std::min(config.max_iters, truth->size()) : config.max_iters;
  for (std::size_t t = 0; t < steps; ++t) {
    StepRecord rec;
    rec.query_id = std::string(query_id);
    rec.step = t;
    if (truth && t < truth->size()) rec.acceptable = acceptable_after_prefix(truth->dag(), t);

    if (retriever.history_blind() && cached) {
      rec.retrieved = *cached;
    } else {
      rec.retrieved = retriever.retrieve(query, history);
      if (retriever.history_blind()) cached = rec.retrieved;
    }

    ToolName chosen;
    if (ctx.backend) {
      SelectionInput in;
      in.catalog = ctx.catalog;
      in.query = query;
      in.executed = executed;
      in.retrieved = &rec.retrieved;
      const auto key = guidance_key(full_history, key_len);
      in.history_key = key;
      in.demo_pool = ctx.demo_pool;
      in.example = ctx.example;
      in.demo_seed = mix64(ctx.seed ^ t);
      const PromptParts prompt = build_selection_prompt(in, ctx.strategy, *ctx.templates);
      rec.prompt = PromptStats::of(prompt);

      SelectionRequest req{&prompt, &rec.retrieved, ctx.catalog, query, t};
      const std::string answer = ctx.backend->select(req);
      try {
        chosen = parse_selection_output(answer, *ctx.catalog);
      } catch (const UnparseableSelection&) {
        chosen = std::string(kInvalidTool);
      }
      rec.selected = chosen;
    }
    out.tools.push_back(chosen);
    out.steps.push_back(std::move(rec));

    if (forced) {
      const auto& next = truth->calls()[t];
      history.push(next.tool);
      full_history.push_back(next.tool);
      executed.push_back(next);
      continue;
    }
    if (!ctx.backend) break;  // nothing to follow without an agent
    if (chosen == kInvalidTool) {
      out.aborted = true;
      break;
    }
    history.push(chosen);
    full_history.push_back(chosen);
    executed.push_back(FunctionCall{t, chosen, {}});
    if (chosen == kEndTool) break;
  }
  return out;
}

std::vector<FunctionCall> fill_parameters(const AgentContext& ctx, std::string_view query,
                                          std::span<const ToolName> tools, const Plan* truth) {
  check_context(ctx);
  if (!ctx.backend) throw std::invalid_argument("parameter filling needs a backend");
  std::vector<FunctionCall> calls;
  for (std::size_t i = 0; i < tools.size(); ++i) {
    FunctionCall call{i, tools[i], {}};
    if (tools[i] == kInvalidTool || !ctx.catalog->contains(tools[i])) {
      calls.push_back(std::move(call));
      continue;
    }
    ParamFillInput in;
    in.catalog = ctx.catalog;
    in.query = query;
    in.executed = calls;
    in.target = tools[i];
    in.demo_pool = ctx.demo_pool;
    in.seed = ctx.seed;
    const PromptParts prompt = build_paramfill_prompt(in, *ctx.templates);
    ParamFillRequest req{&prompt, ctx.catalog, query, i, tools[i], truth};
    const std::string answer = ctx.backend->fill(req);
    try {
      call.arguments = parse_paramfill_output(answer, ctx.catalog->get(tools[i]));
      for (const auto& [name, v] : call.arguments) {
        if (const auto* ref = std::get_if<OutputRef>(&v); ref && ref->step >= i) {
          call.arguments.clear();
          break;
        }
      }
    } catch (const UnparseableArgs&) {
      call.arguments.clear();
    }
    calls.push_back(std::move(call));
  }
  return calls;
}

}  // namespace dtdr
