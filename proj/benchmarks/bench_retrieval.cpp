#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "dtdr/corpus.hpp"
#include "dtdr/depgraph.hpp"
#include "dtdr/embedding.hpp"
#include "dtdr/kmeans.hpp"
#include "dtdr/linear_head.hpp"
#include "dtdr/retriever.hpp"
#include "dtdr/rng.hpp"

namespace {

using namespace dtdr;

const std::vector<std::string> kWords = {"email", "note", "summary", "meeting", "pdf",
                                         "calendar", "reminder", "travel", "report", "map"};

std::string random_query(Rng& rng) {
  std::string q = "please";
  for (int i = 0; i < 6; ++i) q += " " + kWords[rng.below(kWords.size())];
  return q;
}

// Linked chains over the builtin 17-tool catalog.
Corpus make_corpus(std::size_t plans, std::uint64_t seed) {
  Corpus c;
  c.catalog = tinyagent_builtin_catalog();
  Rng rng(seed);
  const std::size_t user = c.catalog.user_tool_count();
  for (std::size_t i = 0; i < plans; ++i) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<FunctionCall> calls;
    for (std::size_t k = 0; k < n; ++k) calls.push_back({k, c.catalog.at(rng.below(user)).name, {}});
    calls.push_back({n, std::string(kEndTool), {}});
    c.demos.push_back({random_query(rng), Plan(std::move(calls))});
  }
  return c;
}

std::shared_ptr<const EmbeddingProvider> hashed() {
  static const auto p = std::make_shared<const HashedEmbeddingProvider>();
  return p;
}

History history_of(const Plan& plan, std::size_t steps) {
  History h(3);
  for (std::size_t i = 0; i < steps && i < plan.size(); ++i) h.push(plan.calls()[i].tool);
  return h;
}

void BM_BuildGraph(benchmark::State& state) {
  const auto corpus = make_corpus(static_cast<std::size_t>(state.range(0)), 1);
  const auto cat = std::make_shared<const ToolCatalog>(corpus.catalog);
  for (auto _ : state) {
    benchmark::DoNotOptimize(DependencyGraph::build(cat, corpus.demos, 3));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BuildGraph)->Arg(1000)->Arg(10000);

void BM_GraphLookup(benchmark::State& state) {
  const auto corpus = make_corpus(2000, 2);
  const auto g = DependencyGraph::build(std::make_shared<const ToolCatalog>(corpus.catalog), corpus.demos, 3);
  const auto h = history_of(corpus.demos[7].plan, 2);
  for (auto _ : state) benchmark::DoNotOptimize(g.lookup(h));
}
BENCHMARK(BM_GraphLookup);

void BM_HashedEmbed(benchmark::State& state) {
  Rng rng(3);
  const std::string q = random_query(rng);
  for (auto _ : state) benchmark::DoNotOptimize(hashed()->embed_one(q));
}
BENCHMARK(BM_HashedEmbed);

void BM_DtdrCRetrieve(benchmark::State& state) {
  const auto corpus = make_corpus(2000, 4);
  const auto r = DtdrCRetriever::fit(corpus, default_cluster_count(corpus.size()), 3, hashed(), 5006);
  const auto h = history_of(corpus.demos[3].plan, 1);
  for (auto _ : state) benchmark::DoNotOptimize(r.retrieve(corpus.demos[3].query, h));
}
BENCHMARK(BM_DtdrCRetrieve);

void BM_Bm25Retrieve(benchmark::State& state) {
  const Bm25Retriever r(std::make_shared<const ToolCatalog>(tinyagent_builtin_catalog()));
  Rng rng(5);
  const std::string q = random_query(rng);
  for (auto _ : state) benchmark::DoNotOptimize(r.retrieve(q, History(3)));
}
BENCHMARK(BM_Bm25Retrieve);

void BM_KMeansFit(benchmark::State& state) {
  Rng rng(6);
  std::vector<std::string> texts;
  for (int i = 0; i < state.range(0); ++i) texts.push_back(random_query(rng));
  const auto points = hashed()->embed(texts);
  const std::size_t k = default_cluster_count(points.size());
  for (auto _ : state) benchmark::DoNotOptimize(fit_kmeans(points, k, 5006));
}
BENCHMARK(BM_KMeansFit)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_LinearHeadStep(benchmark::State& state) {
  const auto corpus = make_corpus(200, 7);
  const auto examples = build_training_examples(corpus, *hashed(), 3);
  const std::vector<TrainingExample> batch(examples.begin(), examples.begin() + 32);
  const auto head = LinearHead::initialized(corpus.catalog.size(), hashed()->dim(), true, 1);
  std::vector<double> gw, gb;
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(head, batch, &gw, &gb));
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_LinearHeadStep);

}  // namespace

BENCHMARK_MAIN();
