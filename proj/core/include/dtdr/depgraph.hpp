#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dtdr/model.hpp"

namespace dtdr {

/// Tuple of tool names, left-padded with "start".
using HistoryKey = std::vector<ToolName>;
using Distribution = std::map<ToolName, double>;

/// Order-N Markov chain over tool names built from demonstration plans.
///
/// Alongside the order-N table the graph keeps the tables for every lower
/// order 1..N-1 built from the same windows, so unseen keys can back off by
/// dropping their oldest element. Lower-order keys are suffixes of the
/// padded order-N keys.
class DependencyGraph {
 public:
  using Table = std::map<HistoryKey, Distribution>;
  using CountTable = std::map<HistoryKey, std::map<ToolName, std::uint64_t>>;

  DependencyGraph() = default;

  /// Throws EmptyCorpus for no demos and std::invalid_argument for order < 1.
  static DependencyGraph build(std::shared_ptr<const ToolCatalog> catalog,
                               std::span<const Demonstration> demos, int order);

  int order() const noexcept { return order_; }
  const ToolCatalog& catalog() const { return *catalog_; }
  std::shared_ptr<const ToolCatalog> catalog_ptr() const { return catalog_; }

  /// Table for key length `n` (defaults to the full order).
  const Table& table(int n = 0) const;
  /// Raw counts; empty for graphs loaded from JSON.
  const CountTable& counts(int n = 0) const;

  /// Pads/truncates `history` to the graph order and returns that key's
  /// distribution, backing off to shorter keys and finally to uniform over the
  /// catalog. Backed-off results carry the flag.
  RetrievalResult lookup(const History& history) const;
  RetrievalResult lookup(std::span<const ToolName> history) const;

  /// Order-N key for a history: last N of ("start" x N ++ history).
  HistoryKey key_for(std::span<const ToolName> history) const;

  /// JSON: {"order", "catalog_fingerprint", "graph": {"h1|...|hn": {tool: p}}}
  /// with keys of every order 1..N. Doubles round-trip exactly.
  std::string to_json() const;
  static DependencyGraph from_json(std::string_view text,
                                   std::shared_ptr<const ToolCatalog> catalog);

  /// Mean Shannon entropy (bits) of the order-N distributions.
  double mean_entropy() const;

 private:
  int order_ = 0;
  std::shared_ptr<const ToolCatalog> catalog_;
  std::vector<Table> tables_;       // index n-1
  std::vector<CountTable> counts_;  // index n-1
};

std::set<ToolName> to_unweighted(const RetrievalResult& result);

std::string encode_key(const HistoryKey& key);
HistoryKey decode_key(std::string_view encoded);

}  // namespace dtdr
