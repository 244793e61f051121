#include "dtdr/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"

namespace dtdr {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

const ParamSpec* ToolSpec::find_param(std::string_view param) const {
  for (const auto& p : parameters) {
    if (p.name == param) return &p;
  }
  return nullptr;
}

ToolCatalog::ToolCatalog(std::vector<ToolSpec> tools,
                         std::string terminal_alias)
    : tools_(std::move(tools)), terminal_alias_(std::move(terminal_alias)) {
  if (terminal_alias_ == kEndTool) terminal_alias_.clear();
  for (std::size_t i = 0; i < tools_.size(); ++i) {
    const auto& t = tools_[i];
    if (t.name.empty()) throw std::invalid_argument("tool name is empty");
    if (t.name == kStartTool) {
      throw std::invalid_argument("\"start\" is reserved and cannot be a tool");
    }
    if (t.name.find('|') != std::string::npos) {
      throw std::invalid_argument("tool name contains '|': " + t.name);
    }
    if (!terminal_alias_.empty() && t.name == terminal_alias_) {
      throw std::invalid_argument("tool name collides with terminal alias: " +
                                  t.name);
    }
    if (!index_.emplace(t.name, i).second) {
      throw std::invalid_argument("duplicate tool name: " + t.name);
    }
    std::set<std::string_view> params;
    for (const auto& p : t.parameters) {
      if (!params.insert(p.name).second) {
        throw std::invalid_argument("duplicate parameter '" + p.name +
                                    "' in tool " + t.name);
      }
    }
  }
  if (!index_.contains(kEndTool)) {
    throw std::invalid_argument("catalog must contain the terminal tool \"end\"");
  }
}

const ToolSpec& ToolCatalog::get(std::string_view name) const {
  return tools_[ordinal_of(name)];
}

std::optional<std::size_t> ToolCatalog::ordinal(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ToolCatalog::ordinal_of(std::string_view name) const {
  auto o = ordinal(name);
  if (!o) throw UnknownTool("unknown tool: " + std::string(name));
  return *o;
}

std::string ToolCatalog::display_name(std::string_view name) const {
  if (name == kEndTool && !terminal_alias_.empty()) return terminal_alias_;
  return std::string(name);
}

std::string ToolCatalog::canonical_name(std::string_view name) const {
  if (!terminal_alias_.empty() && name == terminal_alias_) {
    return std::string(kEndTool);
  }
  return std::string(name);
}

std::vector<ToolName> ToolCatalog::names() const {
  std::vector<ToolName> out;
  out.reserve(tools_.size());
  for (const auto& t : tools_) out.push_back(t.name);
  return out;
}

std::string ToolCatalog::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tools_) {
    h = fnv1a(t.name, h);
    h = fnv1a("\x1f", h);
    for (const auto& p : t.parameters) {
      h = fnv1a(p.name, h);
      h = fnv1a(p.optional ? "?" : "!", h);
    }
    h = fnv1a("\x1e", h);
  }
  return to_hex(h);
}

std::size_t ToolCatalog::longest_name() const {
  std::size_t n = 0;
  for (const auto& t : tools_) n = std::max(n, display_name(t.name).size());
  return n;
}

std::vector<std::size_t> PlanDag::producers(std::size_t step) const {
  std::vector<std::size_t> out;
  for (const auto& [p, c] : edges) {
    if (c == step) out.push_back(p);
  }
  return out;
}

PlanDag build_plan_dag(std::span<const FunctionCall> calls) {
  PlanDag dag;
  dag.nodes.reserve(calls.size());
  for (std::size_t j = 0; j < calls.size(); ++j) {
    const auto& call = calls[j];
    if (call.step != j) {
      throw MalformedRef("call at position " + std::to_string(j) +
                         " has step index " + std::to_string(call.step));
    }
    dag.nodes.push_back({j, call.tool});
    for (const auto& [param, value] : call.arguments) {
      if (const auto* ref = std::get_if<OutputRef>(&value)) {
        if (ref->step >= j) {
          throw MalformedRef("step " + std::to_string(j) + " argument '" +
                             param + "' references step " +
                             std::to_string(ref->step) +
                             ", which is not strictly earlier");
        }
        dag.edges.emplace_back(ref->step, j);
      }
    }
  }
  std::sort(dag.edges.begin(), dag.edges.end());
  dag.edges.erase(std::unique(dag.edges.begin(), dag.edges.end()),
                  dag.edges.end());
  return dag;
}

std::set<ToolName> acceptable_next_tools(
    const PlanDag& dag, const std::set<std::size_t>& executed) {
  std::vector<std::vector<std::size_t>> preds(dag.nodes.size());
  for (const auto& [p, c] : dag.edges) preds[c].push_back(p);

  bool all_others_done = true;
  for (const auto& node : dag.nodes) {
    if (node.tool != kEndTool && !executed.contains(node.step)) {
      all_others_done = false;
      break;
    }
  }

  std::set<ToolName> out;
  for (const auto& node : dag.nodes) {
    if (executed.contains(node.step)) continue;
    if (node.tool == kEndTool) {
      if (all_others_done) out.insert(node.tool);
      continue;
    }
    const bool ready =
        std::all_of(preds[node.step].begin(), preds[node.step].end(),
                    [&](std::size_t p) { return executed.contains(p); });
    if (ready) out.insert(node.tool);
  }
  if (out.empty() && all_others_done) out.insert(std::string(kEndTool));
  return out;
}

std::set<ToolName> acceptable_after_prefix(const PlanDag& dag, std::size_t t) {
  std::set<std::size_t> executed;
  for (std::size_t i = 0; i < t && i < dag.nodes.size(); ++i) executed.insert(i);
  return acceptable_next_tools(dag, executed);
}

Plan::Plan(std::vector<FunctionCall> calls) : calls_(std::move(calls)) {
  if (calls_.empty() || calls_.back().tool != kEndTool) {
    throw std::invalid_argument("plan must end with the \"end\" tool");
  }
  dag_ = build_plan_dag(calls_);
}

std::vector<ToolName> Plan::tool_sequence() const {
  std::vector<ToolName> out;
  out.reserve(calls_.size());
  for (const auto& c : calls_) out.push_back(c.tool);
  return out;
}

History::History(std::span<const ToolName> calls, std::size_t window)
    : window_(window) {
  for (const auto& c : calls) push(c);
}

void History::push(ToolName tool) {
  ++position_;
  if (window_ == 0) return;
  calls_.push_back(std::move(tool));
  if (calls_.size() > window_) calls_.erase(calls_.begin());
}

RetrievalResult RetrievalResult::from_weights(
    const ToolCatalog& catalog,
    std::span<const std::pair<ToolName, double>> weights,
    std::span<const std::size_t> tie_rank) {
  std::map<std::size_t, double> by_ordinal;
  for (const auto& [name, w] : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      throw std::invalid_argument("retrieval weight for " + name +
                                  " must be finite and non-negative");
    }
    const std::size_t o = catalog.ordinal_of(name);
    if (w > 0.0) by_ordinal[o] += w;
  }
  // Sum in ordinal order so the result does not depend on input order.
  double total = 0.0;
  for (const auto& [o, w] : by_ordinal) total += w;

  struct Entry {
    std::size_t ordinal;
    double p;
  };
  std::vector<Entry> entries;
  entries.reserve(by_ordinal.size());
  for (const auto& [o, w] : by_ordinal) entries.push_back({o, w / total});

  auto rank_of = [&](std::size_t o) {
    return tie_rank.empty() ? o : tie_rank[o];
  };
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.p != b.p) return a.p > b.p;
    return rank_of(a.ordinal) < rank_of(b.ordinal);
  });

  RetrievalResult r;
  r.ranking_.reserve(entries.size());
  for (const auto& e : entries) {
    r.ranking_.push_back({catalog.at(e.ordinal).name, e.p});
  }
  return r;
}

RetrievalResult RetrievalResult::uniform(const ToolCatalog& catalog) {
  std::vector<std::pair<ToolName, double>> w;
  w.reserve(catalog.size());
  for (const auto& t : catalog.tools()) w.emplace_back(t.name, 1.0);
  return from_weights(catalog, w);
}

RetrievalResult RetrievalResult::from_ranking(std::vector<ScoredTool> ranking) {
  RetrievalResult r;
  r.ranking_ = std::move(ranking);
  return r;
}

double RetrievalResult::probability(std::string_view tool) const {
  for (const auto& s : ranking_) {
    if (s.name == tool) return s.probability;
  }
  return 0.0;
}

bool RetrievalResult::contains(std::string_view tool) const {
  return std::any_of(ranking_.begin(), ranking_.end(),
                     [&](const ScoredTool& s) { return s.name == tool; });
}

std::vector<ToolName> RetrievalResult::support() const {
  std::vector<ToolName> out;
  out.reserve(ranking_.size());
  for (const auto& s : ranking_) out.push_back(s.name);
  return out;
}

std::optional<ToolName> RetrievalResult::top() const {
  if (ranking_.empty()) return std::nullopt;
  return ranking_.front().name;
}

}  // namespace dtdr
