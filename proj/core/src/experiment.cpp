#include "dtdr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/rng.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

namespace {

struct MethodName {
  Method method;
  std::string_view tag;
};

constexpr MethodName kMethods[] = {
    {Method::random, "random"},           {Method::bm25, "bm25"},
    {Method::qts_vanilla, "qts_vanilla"}, {Method::qts_lim, "qts_lim"},
    {Method::qts_toolgraph, "qts_toolgraph"}, {Method::static_dr, "static_dr"},
    {Method::static_lr, "static_lr"},     {Method::dtdr_c, "dtdr_c"},
    {Method::dtdr_l, "dtdr_l"},           {Method::perfect, "perfect"},
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Method parse_method(std::string_view tag) {
  for (const auto& m : kMethods) {
    if (m.tag == tag) return m.method;
  }
  throw std::invalid_argument("unknown method '" + std::string(tag) + "'");
}

std::string_view to_string(Method method) {
  for (const auto& m : kMethods) {
    if (m.method == method) return m.tag;
  }
  return "?";
}

bool is_graph_method(Method method) {
  return method == Method::static_dr || method == Method::dtdr_c;
}

EvalMode parse_eval_mode(std::string_view tag) {
  if (tag == "retrieval") return EvalMode::retrieval;
  if (tag == "teacher_forced") return EvalMode::teacher_forced;
  if (tag == "free_running") return EvalMode::free_running;
  if (tag == "all") return EvalMode::all;
  throw std::invalid_argument("unknown eval mode '" + std::string(tag) + "'");
}

std::string_view to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::retrieval: return "retrieval";
    case EvalMode::teacher_forced: return "teacher_forced";
    case EvalMode::free_running: return "free_running";
    case EvalMode::all: return "all";
  }
  return "?";
}

void RunConfig::validate(bool has_backend) const {
  if (is_graph_method(method) && order < 1) {
    throw std::invalid_argument("graph order must be >= 1");
  }
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in [0, 1)");
  if (max_iters == 0) throw std::invalid_argument("max_iters must be >= 1");
  if (jobs == 0) throw std::invalid_argument("jobs must be >= 1");
  if (icl.max_demos == 0 && icl.kind == IclKind::raw_demos) {
    throw std::invalid_argument("raw_demos needs max_demos >= 1");
  }
  if (mode != EvalMode::retrieval && !has_backend) {
    throw std::invalid_argument(std::string(to_string(mode)) + " evaluation needs a backend");
  }
  train.validate();
}

std::unique_ptr<Retriever> make_retriever(const RunConfig& config, const Corpus& train,
                                          const Corpus& test,
                                          std::shared_ptr<const EmbeddingProvider> provider,
                                          std::shared_ptr<const LlmClient> llm, TrainLog* log) {
  auto catalog = std::make_shared<const ToolCatalog>(train.catalog);
  switch (config.method) {
    case Method::random:
      return std::make_unique<RandomRetriever>(catalog, config.seed);
    case Method::bm25:
      return std::make_unique<Bm25Retriever>(catalog);
    case Method::qts_vanilla:
      return std::make_unique<QtsRetriever>(catalog, provider, QtsVariant::vanilla);
    case Method::qts_lim:
      return std::make_unique<QtsRetriever>(catalog, provider, QtsVariant::less_is_more, nullptr,
                                            std::move(llm));
    case Method::qts_toolgraph: {
      const auto graph = DependencyGraph::build(catalog, train.demos, 1);
      return std::make_unique<QtsRetriever>(catalog, provider, QtsVariant::tool_graph, &graph);
    }
    case Method::static_dr:
      return std::make_unique<StaticGraphRetriever>(
          DependencyGraph::build(catalog, train.demos, config.order));
    case Method::dtdr_c: {
      const std::size_t k =
          config.clusters > 0 ? config.clusters : default_cluster_count(train.size());
      return std::make_unique<DtdrCRetriever>(
          DtdrCRetriever::fit(train, k, config.order, provider, config.seed));
    }
    case Method::static_lr:
    case Method::dtdr_l: {
      const std::size_t l = config.method == Method::static_lr ? 0 : config.history_len;
      TrainConfig tc = config.train;
      tc.seed = config.seed;
      return std::make_unique<LinearRetriever>(
          LinearRetriever::train(train, provider, tc, l, config.alpha, log));
    }
    case Method::perfect:
      return std::make_unique<PerfectRetriever>(catalog, test.demos);
  }
  throw std::invalid_argument("unsupported method");
}

std::unique_ptr<Retriever> load_retriever(Method method, const std::filesystem::path& path,
                                          std::shared_ptr<const ToolCatalog> catalog,
                                          std::shared_ptr<const EmbeddingProvider> provider,
                                          double alpha) {
  switch (method) {
    case Method::static_dr:
      return std::make_unique<StaticGraphRetriever>(
          DependencyGraph::from_json(read_file(path), catalog));
    case Method::dtdr_c:
      return std::make_unique<DtdrCRetriever>(DtdrCRetriever::load(path, catalog, provider));
    case Method::static_lr:
    case Method::dtdr_l: {
      LinearHead head = LinearHead::from_json(read_file(path), catalog->fingerprint());
      if ((method == Method::static_lr) != (head.history_len == 0)) {
        throw std::invalid_argument("model history length does not match method " +
                                    std::string(to_string(method)));
      }
      head.threshold = alpha;
      return std::make_unique<LinearRetriever>(std::move(head), catalog, provider);
    }
    default:
      throw std::invalid_argument("method " + std::string(to_string(method)) +
                                  " has no saved model");
  }
}

std::string query_id(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "q%06zu", index);
  return buf;
}

namespace {

struct QueryOutput {
  std::vector<StepRecord> steps;
  std::optional<PlanRecord> plan;
};

QueryOutput evaluate_query(const RunConfig& config, const AgentContext& base,
                           std::size_t index, const Demonstration& demo) {
  QueryOutput out;
  const std::string id = query_id(index);
  LoopConfig loop;
  loop.max_iters = config.max_iters;
  loop.history_len = config.history_len;

  const bool forced = config.mode != EvalMode::free_running;
  if (forced) {
    AgentContext ctx = base;
    if (config.mode == EvalMode::retrieval) ctx.backend = nullptr;
    loop.mode = LoopMode::teacher_forced;
    out.steps = select_trajectory(ctx, id, demo.query, &demo.plan, loop).steps;
  }
  if (config.mode == EvalMode::free_running || config.mode == EvalMode::all) {
    loop.mode = LoopMode::free_running;
    auto traj = select_trajectory(base, id, demo.query, &demo.plan, loop);
    bool success = false;
    if (!traj.aborted && !traj.tools.empty() && traj.tools.back() == kEndTool) {
      const auto calls = fill_parameters(base, demo.query, traj.tools, &demo.plan);
      success = plan_success(calls, demo.plan);
    }
    out.plan = PlanRecord{id, success};
    if (config.mode == EvalMode::free_running) {
      // The truth prefix does not describe the agent's own history.
      for (auto& s : traj.steps) {
        s.acceptable.clear();
        s.selected.reset();
      }
      out.steps = std::move(traj.steps);
    }
  }
  return out;
}

}  // namespace

EvalOutput run_evaluation(const RunConfig& config, const Corpus& train, const Corpus& test,
                          const Retriever& retriever, const AgentBackend* backend,
                          const PromptTemplates& templates) {
  config.validate(backend != nullptr);

  std::optional<WorkedExample> example;
  if (backend) example = pick_worked_example(train.demos, config.seed);

  AgentContext ctx;
  ctx.catalog = &test.catalog;
  ctx.retriever = &retriever;
  ctx.backend = backend;
  ctx.templates = &templates;
  ctx.strategy = config.icl;
  ctx.demo_pool = train.demos;
  ctx.example = example ? &*example : nullptr;
  ctx.seed = config.seed;

  const std::size_t n = test.size();
  std::vector<QueryOutput> results(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        results[i] = evaluate_query(config, ctx, i, test.demos[i]);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };

  const std::size_t threads = std::min(config.jobs, std::max<std::size_t>(1, n));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  EvalOutput out;
  for (auto& r : results) {
    for (auto& s : r.steps) out.steps.push_back(std::move(s));
    if (r.plan) out.plans.push_back(std::move(*r.plan));
  }
  return out;
}

namespace {

std::size_t parse_count(std::string_view s) {
  s = trim(s);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("bad sweep value '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

SweepSpec parse_sweep(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("sweep must look like param=values");
  SweepSpec spec;
  spec.param = std::string(trim(text.substr(0, eq)));
  if (spec.param != "history_len" && spec.param != "clusters" && spec.param != "demos") {
    throw std::invalid_argument("unknown sweep parameter '" + spec.param + "'");
  }
  const std::string_view values = text.substr(eq + 1);
  if (const auto dots = values.find(".."); dots != std::string_view::npos) {
    const std::size_t lo = parse_count(values.substr(0, dots));
    const std::size_t hi = parse_count(values.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("empty sweep range");
    for (std::size_t v = lo; v <= hi; ++v) spec.values.push_back(v);
  } else {
    std::size_t start = 0;
    for (;;) {
      const auto comma = values.find(',', start);
      spec.values.push_back(parse_count(values.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
  }
  if (spec.values.empty()) throw std::invalid_argument("sweep has no values");
  return spec;
}

RunConfig apply_sweep_point(RunConfig config, std::string_view param, std::size_t value) {
  if (param == "history_len") {
    config.history_len = value;
    if (is_graph_method(config.method)) config.order = static_cast<int>(value);
  } else if (param == "clusters") {
    if (value == 0) throw std::invalid_argument("clusters must be >= 1");
    config.clusters = value;
  } else if (param != "demos") {
    throw std::invalid_argument("unknown sweep parameter '" + std::string(param) + "'");
  }
  return config;
}

Corpus subsample(const Corpus& train, std::size_t n, std::uint64_t seed) {
  if (n >= train.size()) return train;
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix64(seed ^ 0xde305ULL));
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return train.subset(idx);
}

}  // namespace dtdr
