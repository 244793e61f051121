#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/corpus.hpp"
#include "dtdr/depgraph.hpp"
#include "dtdr/embedding.hpp"
#include "dtdr/kmeans.hpp"
#include "dtdr/linear_head.hpp"
#include "dtdr/model.hpp"

namespace dtdr {

/// retrieve(query, history) -> normalized distribution over catalog tools.
/// Implementations are immutable after construction and safe to call
/// concurrently.
class Retriever {
 public:
  virtual ~Retriever() = default;

  virtual RetrievalResult retrieve(std::string_view query, const History& history) const = 0;
  virtual std::string name() const = 0;
  /// Number of trailing history calls the retriever looks at.
  virtual std::size_t history_window() const { return 0; }
  /// True when the output depends on the query alone, so one retrieval per
  /// task suffices.
  virtual bool history_blind() const { return history_window() == 0; }
  virtual bool graph_based() const { return false; }
};

/// Keeps tools with probability > alpha and renormalizes them. When nothing
/// survives the input is returned unchanged with the fallback flag set.
/// alpha <= 0 is the identity.
RetrievalResult apply_threshold(const RetrievalResult& result, double alpha);

/// Minimal text-completion client, used by the less-is-more baseline.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  /// Throws BackendUnavailable.
  virtual std::string complete(std::string_view system, std::string_view user,
                               int max_tokens) const = 0;
};

// -- graph-based --------------------------------------------------------------

/// One global dependency graph (the static Dependency Retriever).
class StaticGraphRetriever final : public Retriever {
 public:
  explicit StaticGraphRetriever(DependencyGraph graph);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return "static_dr"; }
  std::size_t history_window() const override {
    return static_cast<std::size_t>(graph_.order());
  }
  bool graph_based() const override { return true; }
  const DependencyGraph& graph() const noexcept { return graph_; }

 private:
  DependencyGraph graph_;
};

/// ceil(n / 10), at least 1.
std::size_t default_cluster_count(std::size_t train_size);

struct DtdrCModel {
  KMeansModel kmeans;
  std::vector<DependencyGraph> graphs;  // one per cluster
  DependencyGraph global;
  std::vector<bool> empty_cluster;      // graph delegates to `global`
};

/// Query-clustered dependency graphs.
class DtdrCRetriever final : public Retriever {
 public:
  DtdrCRetriever(DtdrCModel model, std::shared_ptr<const EmbeddingProvider> provider);

  /// Clusters the training queries into K groups and builds one order-N graph
  /// per group. Clusters left without demos use the global graph.
  static DtdrCRetriever fit(const Corpus& train, std::size_t k, int order,
                            std::shared_ptr<const EmbeddingProvider> provider,
                            std::uint64_t seed);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return "dtdr_c"; }
  std::size_t history_window() const override {
    return static_cast<std::size_t>(model_.global.order());
  }
  bool graph_based() const override { return true; }

  std::size_t cluster_of(std::string_view query) const;
  const DtdrCModel& model() const noexcept { return model_; }

  /// Writes model.json (centroids) and graph_<k>.json / global.json.
  void save(const std::filesystem::path& dir) const;
  static DtdrCRetriever load(const std::filesystem::path& dir,
                             std::shared_ptr<const ToolCatalog> catalog,
                             std::shared_ptr<const EmbeddingProvider> provider);

 private:
  DtdrCModel model_;
  std::shared_ptr<const EmbeddingProvider> provider_;
};

// -- learned ------------------------------------------------------------------

/// Training pairs for the linear head: for each demo and step t, the query
/// composed with the last `history_len` ground-truth tools before t, and the
/// multi-hot acceptable set after that prefix.
std::vector<TrainingExample> build_training_examples(const Corpus& train,
                                                     const EmbeddingProvider& provider,
                                                     std::size_t history_len);

/// DTDR-L (history_len > 0) or the static linear baseline (history_len 0).
class LinearRetriever final : public Retriever {
 public:
  LinearRetriever(LinearHead head, std::shared_ptr<const ToolCatalog> catalog,
                  std::shared_ptr<const EmbeddingProvider> provider);

  static LinearRetriever train(const Corpus& train, std::shared_ptr<const EmbeddingProvider> provider,
                               const TrainConfig& config, std::size_t history_len,
                               double alpha = 0.2, TrainLog* log = nullptr,
                               const std::function<void(int, double)>& on_epoch = {});

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  /// Softmax before the alpha filter.
  RetrievalResult distribution(std::string_view query, const History& history) const;
  std::string name() const override { return head_.history_len == 0 ? "static_lr" : "dtdr_l"; }
  std::size_t history_window() const override { return head_.history_len; }

  const LinearHead& head() const noexcept { return head_; }
  void set_alpha(double alpha) { head_.threshold = alpha; }

 private:
  LinearHead head_;
  std::shared_ptr<const ToolCatalog> catalog_;
  std::shared_ptr<const EmbeddingProvider> provider_;
};

// -- baselines ----------------------------------------------------------------

class Bm25Retriever final : public Retriever {
 public:
  explicit Bm25Retriever(std::shared_ptr<const ToolCatalog> catalog, double k1 = 1.5,
                         double b = 0.75);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return "bm25"; }

  /// Raw Okapi scores in catalog order (before shifting).
  std::vector<double> scores(std::string_view query) const;

 private:
  std::shared_ptr<const ToolCatalog> catalog_;
  double k1_, b_;
  std::vector<std::map<std::string, std::size_t>> tf_;
  std::vector<std::size_t> doc_len_;
  std::map<std::string, std::size_t> df_;
  double avg_len_ = 0.0;
};

enum class QtsVariant { vanilla, less_is_more, tool_graph };

class QtsRetriever final : public Retriever {
 public:
  /// `graph` (order 1) is required for tool_graph, `llm` for less_is_more.
  /// Throws LlmUnavailable or std::invalid_argument when they are missing.
  QtsRetriever(std::shared_ptr<const ToolCatalog> catalog,
               std::shared_ptr<const EmbeddingProvider> provider, QtsVariant variant,
               const DependencyGraph* graph = nullptr,
               std::shared_ptr<const LlmClient> llm = nullptr);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override;

  const std::vector<Embedding>& tool_embeddings() const noexcept { return tools_; }

 private:
  std::shared_ptr<const ToolCatalog> catalog_;
  std::shared_ptr<const EmbeddingProvider> provider_;
  QtsVariant variant_;
  std::shared_ptr<const LlmClient> llm_;
  std::vector<Embedding> tools_;
};

/// Uniform over the catalog; the order among equal scores is a seeded
/// permutation per (query, history) probe.
class RandomRetriever final : public Retriever {
 public:
  RandomRetriever(std::shared_ptr<const ToolCatalog> catalog, std::uint64_t seed);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return "random"; }
  bool history_blind() const override { return false; }

 private:
  std::shared_ptr<const ToolCatalog> catalog_;
  std::uint64_t seed_;
};

/// Test-time oracle: reads the ground-truth plan for a known query and ranks
/// the true next call first, followed by the rest of the acceptable set.
/// Uses `History::position()` as the step index.
class PerfectRetriever final : public Retriever {
 public:
  PerfectRetriever(std::shared_ptr<const ToolCatalog> catalog,
                   std::span<const Demonstration> truth);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return "perfect"; }
  bool history_blind() const override { return false; }

 private:
  std::shared_ptr<const ToolCatalog> catalog_;
  std::map<std::string, Plan, std::less<>> plans_;
};

/// Applies the alpha filter to another (non-graph) retriever.
class ThresholdedRetriever final : public Retriever {
 public:
  ThresholdedRetriever(std::unique_ptr<Retriever> inner, double alpha);

  RetrievalResult retrieve(std::string_view query, const History& history) const override;
  std::string name() const override { return inner_->name(); }
  std::size_t history_window() const override { return inner_->history_window(); }
  bool history_blind() const override { return inner_->history_blind(); }

 private:
  std::unique_ptr<Retriever> inner_;
  double alpha_;
};

}  // namespace dtdr
