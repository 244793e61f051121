#include "dtdr/depgraph.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "dtdr/errors.hpp"

namespace dtdr {

using nlohmann::json;

std::string encode_key(const HistoryKey& key) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) out += '|';
    out += key[i];
  }
  return out;
}

HistoryKey decode_key(std::string_view encoded) {
  HistoryKey key;
  std::size_t start = 0;
  while (true) {
    const auto bar = encoded.find('|', start);
    key.emplace_back(encoded.substr(start, bar - start));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return key;
}

DependencyGraph DependencyGraph::build(std::shared_ptr<const ToolCatalog> catalog,
                                       std::span<const Demonstration> demos,
                                       int order) {
  if (order < 1) throw std::invalid_argument("graph order must be >= 1");
  if (demos.empty()) throw EmptyCorpus("cannot build a dependency graph from no demonstrations");
  if (!catalog) throw std::invalid_argument("graph needs a catalog");

  DependencyGraph g;
  g.order_ = order;
  g.catalog_ = std::move(catalog);
  g.counts_.resize(static_cast<std::size_t>(order));
  g.tables_.resize(static_cast<std::size_t>(order));

  const std::string start(kStartTool);
  for (const auto& demo : demos) {
    const auto seq = demo.plan.tool_sequence();
    for (const auto& t : seq) g.catalog_->ordinal_of(t);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      for (int n = 1; n <= order; ++n) {
        HistoryKey key;
        key.reserve(static_cast<std::size_t>(n));
        for (int back = n; back >= 1; --back) {
          const auto pos = static_cast<std::ptrdiff_t>(i) - back;
          key.push_back(pos < 0 ? start : seq[static_cast<std::size_t>(pos)]);
        }
        ++g.counts_[static_cast<std::size_t>(n - 1)][std::move(key)][seq[i]];
      }
    }
  }
  for (std::size_t n = 0; n < g.counts_.size(); ++n) {
    for (const auto& [key, succ] : g.counts_[n]) {
      std::uint64_t total = 0;
      for (const auto& [tool, c] : succ) total += c;
      auto& dist = g.tables_[n][key];
      for (const auto& [tool, c] : succ) {
        dist[tool] = static_cast<double>(c) / static_cast<double>(total);
      }
    }
  }
  return g;
}

const DependencyGraph::Table& DependencyGraph::table(int n) const {
  if (n == 0) n = order_;
  if (n < 1 || n > order_) throw std::out_of_range("no table of order " + std::to_string(n));
  return tables_[static_cast<std::size_t>(n - 1)];
}

const DependencyGraph::CountTable& DependencyGraph::counts(int n) const {
  static const CountTable kEmpty;
  if (n == 0) n = order_;
  if (n < 1 || n > order_) throw std::out_of_range("no table of order " + std::to_string(n));
  if (counts_.empty()) return kEmpty;
  return counts_[static_cast<std::size_t>(n - 1)];
}

HistoryKey DependencyGraph::key_for(std::span<const ToolName> history) const {
  HistoryKey key(static_cast<std::size_t>(order_), std::string(kStartTool));
  const std::size_t take = std::min(history.size(), key.size());
  for (std::size_t i = 0; i < take; ++i) {
    key[key.size() - take + i] = history[history.size() - take + i];
  }
  return key;
}

RetrievalResult DependencyGraph::lookup(const History& history) const {
  return lookup(history.calls());
}

RetrievalResult DependencyGraph::lookup(std::span<const ToolName> history) const {
  if (!catalog_) throw std::logic_error("lookup on an empty DependencyGraph");
  const HistoryKey full = key_for(history);
  for (int n = order_; n >= 1; --n) {
    const HistoryKey key(full.end() - n, full.end());
    const auto& t = tables_[static_cast<std::size_t>(n - 1)];
    if (auto it = t.find(key); it != t.end()) {
      std::vector<std::pair<ToolName, double>> w(it->second.begin(), it->second.end());
      auto r = RetrievalResult::from_weights(*catalog_, w);
      r.set_backed_off(n != order_);
      return r;
    }
  }
  auto r = RetrievalResult::uniform(*catalog_);
  r.set_backed_off(true);
  return r;
}

std::string DependencyGraph::to_json() const {
  json graph = json::object();
  for (const auto& t : tables_) {
    for (const auto& [key, dist] : t) {
      json d = json::object();
      for (const auto& [tool, p] : dist) d[tool] = p;
      graph[encode_key(key)] = std::move(d);
    }
  }
  json root = {{"order", order_},
               {"catalog_fingerprint", catalog_ ? catalog_->fingerprint() : ""},
               {"graph", std::move(graph)}};
  return root.dump(1) + "\n";
}

DependencyGraph DependencyGraph::from_json(std::string_view text,
                                           std::shared_ptr<const ToolCatalog> catalog) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("graph", std::string("invalid JSON: ") + e.what());
  }
  if (!root.contains("order") || !root["order"].is_number_integer() || !root.contains("graph")) {
    throw SchemaError("graph", "expected {order, graph}");
  }
  const std::string fp = root.value("catalog_fingerprint", "");
  if (!fp.empty() && fp != catalog->fingerprint()) {
    throw CatalogMismatch("graph was built for catalog " + fp + ", not " + catalog->fingerprint());
  }
  DependencyGraph g;
  g.order_ = root["order"].get<int>();
  if (g.order_ < 1) throw SchemaError("graph.order", "order must be >= 1");
  g.catalog_ = std::move(catalog);
  g.tables_.resize(static_cast<std::size_t>(g.order_));
  for (const auto& [enc, dist] : root["graph"].items()) {
    HistoryKey key = decode_key(enc);
    if (key.empty() || key.size() > g.tables_.size()) {
      throw SchemaError("graph." + enc, "key length outside 1..order");
    }
    for (const auto& name : key) {
      if (name != kStartTool && !g.catalog_->contains(name)) {
        throw UnknownTool("graph key references unknown tool '" + name + "'");
      }
    }
    Distribution d;
    for (const auto& [tool, p] : dist.items()) {
      g.catalog_->ordinal_of(tool);
      d[tool] = p.get<double>();
    }
    g.tables_[key.size() - 1][std::move(key)] = std::move(d);
  }
  return g;
}

double DependencyGraph::mean_entropy() const {
  const auto& t = table();
  if (t.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [key, dist] : t) {
    for (const auto& [tool, p] : dist) {
      if (p > 0.0) sum -= p * std::log2(p);
    }
  }
  return sum / static_cast<double>(t.size());
}

std::set<ToolName> to_unweighted(const RetrievalResult& result) {
  std::set<ToolName> out;
  for (const auto& s : result.ranking()) out.insert(s.name);
  return out;
}

}  // namespace dtdr
