#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/agent.hpp"
#include "dtdr/corpus.hpp"
#include "dtdr/embedding.hpp"
#include "dtdr/linear_head.hpp"
#include "dtdr/metrics.hpp"
#include "dtdr/prompt.hpp"
#include "dtdr/retriever.hpp"

namespace dtdr {

enum class Method {
  random,
  bm25,
  qts_vanilla,
  qts_lim,
  qts_toolgraph,
  static_dr,
  static_lr,
  dtdr_c,
  dtdr_l,
  perfect,  // reads the test plans; for soundness checks only
};

/// Throws std::invalid_argument.
Method parse_method(std::string_view tag);
std::string_view to_string(Method method);
bool is_graph_method(Method method);

enum class EvalMode { retrieval, teacher_forced, free_running, all };

EvalMode parse_eval_mode(std::string_view tag);
std::string_view to_string(EvalMode mode);

struct RunConfig {
  Method method = Method::dtdr_l;
  IclStrategy icl;
  EvalMode mode = EvalMode::retrieval;
  std::uint64_t seed = 5006;
  std::size_t history_len = 3;  // l for DTDR-L and the agent's history window
  int order = 3;                // N for graph methods
  std::size_t clusters = 0;     // 0: default_cluster_count(|train|)
  double alpha = 0.2;           // linear methods
  std::size_t max_iters = 16;
  std::size_t jobs = 1;
  TrainConfig train;

  /// Throws std::invalid_argument for out-of-range values and incompatible
  /// method/mode combinations. `has_backend` is whether an agent is wired.
  void validate(bool has_backend) const;
};

/// Builds the retriever for `config.method` from the training split.
/// `test` is only read by the perfect retriever. `llm` is required for
/// qts_lim (LlmUnavailable otherwise).
std::unique_ptr<Retriever> make_retriever(const RunConfig& config, const Corpus& train,
                                          const Corpus& test,
                                          std::shared_ptr<const EmbeddingProvider> provider,
                                          std::shared_ptr<const LlmClient> llm = nullptr,
                                          TrainLog* log = nullptr);

/// Loads a retriever saved by the build-graph/train commands: a graph file
/// (static_dr), a linear head file (static_lr, dtdr_l) or a DTDR-C model
/// directory (dtdr_c).
std::unique_ptr<Retriever> load_retriever(Method method, const std::filesystem::path& path,
                                          std::shared_ptr<const ToolCatalog> catalog,
                                          std::shared_ptr<const EmbeddingProvider> provider,
                                          double alpha);

struct EvalOutput {
  std::vector<StepRecord> steps;  // ordered by query id, then step
  std::vector<PlanRecord> plans;  // ordered by query id
};

/// Stable query id for the i-th test demonstration.
std::string query_id(std::size_t index);

/// Runs one evaluation of `retriever` over the test split.
///
///  - retrieval: teacher-forced retrieval only (MRR, F1)
///  - teacher_forced: retrieval plus agent selections (adds FSA)
///  - free_running: full trajectories and parameter filling (success rate);
///    step records keep retrieval diagnostics and prompt sizes only
///  - all: teacher_forced steps plus free_running plans
///
/// Queries are processed on `config.jobs` threads; output order does not
/// depend on completion order.
EvalOutput run_evaluation(const RunConfig& config, const Corpus& train, const Corpus& test,
                          const Retriever& retriever, const AgentBackend* backend,
                          const PromptTemplates& templates);

struct SweepSpec {
  std::string param;  // history_len | clusters | demos
  std::vector<std::size_t> values;
};

/// "history_len=0..5", "clusters=1,10,100", "demos=100,1000". Throws
/// std::invalid_argument.
SweepSpec parse_sweep(std::string_view text);

/// Config for one sweep point. history_len also sets the order of graph
/// methods. demos is applied to the corpus, not the config.
RunConfig apply_sweep_point(RunConfig config, std::string_view param, std::size_t value);

/// The first `n` training demonstrations after a seeded shuffle (all of them
/// when n >= |train|).
Corpus subsample(const Corpus& train, std::size_t n, std::uint64_t seed);

}  // namespace dtdr
