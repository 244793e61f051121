#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/retriever.hpp"
#include "dtdr/rng.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw SchemaError(p.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

RetrievalResult softmax_result(const ToolCatalog& catalog, const std::vector<double>& scores) {
  double mx = scores.front();
  for (double s : scores) mx = std::max(mx, s);
  std::vector<std::pair<ToolName, double>> w;
  w.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w.emplace_back(catalog.at(i).name, std::exp(scores[i] - mx));
  }
  return RetrievalResult::from_weights(catalog, w);
}

}  // namespace

RetrievalResult apply_threshold(const RetrievalResult& result, double alpha) {
  if (alpha <= 0.0) return result;
  std::vector<ScoredTool> kept;
  double sum = 0.0;
  for (const auto& s : result.ranking()) {
    if (s.probability > alpha) {
      kept.push_back(s);
      sum += s.probability;
    }
  }
  if (kept.size() == result.size()) return result;
  if (kept.empty()) {
    RetrievalResult r = result;
    r.set_fallback(true);
    return r;
  }
  for (auto& k : kept) k.probability /= sum;
  return RetrievalResult::from_ranking(std::move(kept));
}

// -- static graph ---------------------------------------------------------------

StaticGraphRetriever::StaticGraphRetriever(DependencyGraph graph) : graph_(std::move(graph)) {}

RetrievalResult StaticGraphRetriever::retrieve(std::string_view, const History& history) const {
  return graph_.lookup(history);
}

// -- DTDR-C ---------------------------------------------------------------------

std::size_t default_cluster_count(std::size_t train_size) {
  return std::max<std::size_t>(1, (train_size + 9) / 10);
}

DtdrCRetriever::DtdrCRetriever(DtdrCModel model, std::shared_ptr<const EmbeddingProvider> provider)
    : model_(std::move(model)), provider_(std::move(provider)) {
  if (!provider_) throw std::invalid_argument("DTDR-C needs an embedding provider");
  if (model_.graphs.size() != model_.kmeans.k() || model_.empty_cluster.size() != model_.graphs.size()) {
    throw std::invalid_argument("DTDR-C model has inconsistent cluster count");
  }
}

DtdrCRetriever DtdrCRetriever::fit(const Corpus& train, std::size_t k, int order,
                                   std::shared_ptr<const EmbeddingProvider> provider,
                                   std::uint64_t seed) {
  if (train.empty()) throw EmptyCorpus("DTDR-C needs training demonstrations");
  if (!provider) throw std::invalid_argument("DTDR-C needs an embedding provider");
  auto catalog = std::make_shared<const ToolCatalog>(train.catalog);

  std::vector<std::string> queries;
  queries.reserve(train.size());
  for (const auto& d : train.demos) queries.push_back(d.query);
  const auto embeddings = provider->embed(queries);

  DtdrCModel m;
  m.kmeans = fit_kmeans(embeddings, k, seed);
  m.global = DependencyGraph::build(catalog, train.demos, order);

  std::vector<std::vector<Demonstration>> members(k);
  for (std::size_t i = 0; i < train.size(); ++i) {
    members[m.kmeans.assignment[i]].push_back(train.demos[i]);
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].empty()) {
      m.graphs.push_back(m.global);
      m.empty_cluster.push_back(true);
    } else {
      m.graphs.push_back(DependencyGraph::build(catalog, members[c], order));
      m.empty_cluster.push_back(false);
    }
  }
  return DtdrCRetriever(std::move(m), std::move(provider));
}

std::size_t DtdrCRetriever::cluster_of(std::string_view query) const {
  return model_.kmeans.nearest(provider_->embed_one(query));
}

RetrievalResult DtdrCRetriever::retrieve(std::string_view query, const History& history) const {
  return model_.graphs[cluster_of(query)].lookup(history);
}

void DtdrCRetriever::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json centroids = json::array();
  for (const auto& c : model_.kmeans.centroids) centroids.push_back(c.values);
  json empty = json::array();
  for (bool e : model_.empty_cluster) empty.push_back(e);
  json root = {{"format", "dtdr-c/1"},
               {"catalog_fingerprint", model_.global.catalog().fingerprint()},
               {"provider", provider_->describe()},
               {"k", model_.kmeans.k()},
               {"order", model_.global.order()},
               {"empty_cluster", std::move(empty)},
               {"centroids", std::move(centroids)}};
  write_file(dir / "model.json", root.dump() + "\n");
  write_file(dir / "global.json", model_.global.to_json());
  for (std::size_t c = 0; c < model_.graphs.size(); ++c) {
    write_file(dir / ("graph_" + std::to_string(c) + ".json"), model_.graphs[c].to_json());
  }
}

DtdrCRetriever DtdrCRetriever::load(const std::filesystem::path& dir,
                                    std::shared_ptr<const ToolCatalog> catalog,
                                    std::shared_ptr<const EmbeddingProvider> provider) {
  json root;
  try {
    root = json::parse(read_file(dir / "model.json"));
  } catch (const json::parse_error& e) {
    throw SchemaError((dir / "model.json").string(), e.what());
  }
  try {
    if (root.at("format").get<std::string>() != "dtdr-c/1") {
      throw SchemaError("model.json", "not a DTDR-C model");
    }
    const auto fp = root.at("catalog_fingerprint").get<std::string>();
    if (fp != catalog->fingerprint()) {
      throw CatalogMismatch("model was fit on catalog " + fp + ", not " + catalog->fingerprint());
    }
    DtdrCModel m;
    for (const auto& c : root.at("centroids")) {
      m.kmeans.centroids.push_back(Embedding{c.get<std::vector<double>>()});
    }
    m.empty_cluster = root.at("empty_cluster").get<std::vector<bool>>();
    m.global = DependencyGraph::from_json(read_file(dir / "global.json"), catalog);
    for (std::size_t c = 0; c < m.kmeans.centroids.size(); ++c) {
      m.graphs.push_back(DependencyGraph::from_json(
          read_file(dir / ("graph_" + std::to_string(c) + ".json")), catalog));
    }
    return DtdrCRetriever(std::move(m), std::move(provider));
  } catch (const json::exception& e) {
    throw SchemaError((dir / "model.json").string(), e.what());
  }
}

// -- linear ---------------------------------------------------------------------

std::vector<TrainingExample> build_training_examples(const Corpus& train,
                                                     const EmbeddingProvider& provider,
                                                     std::size_t history_len) {
  const auto& catalog = train.catalog;
  std::vector<std::string> texts;
  std::vector<TrainingExample> out;
  for (const auto& demo : train.demos) {
    const auto seq = demo.plan.tool_sequence();
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const std::size_t from = t > history_len ? t - history_len : 0;
      texts.push_back(compose_retrieval_input(
          demo.query, std::span<const ToolName>(seq.data() + from, t - from)));
      TrainingExample ex;
      ex.target.assign(catalog.size(), 0.0);
      for (const auto& name : acceptable_after_prefix(demo.plan.dag(), t)) {
        ex.target[catalog.ordinal_of(name)] = 1.0;
      }
      out.push_back(std::move(ex));
    }
  }
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < texts.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, texts.size() - start);
    auto vecs = provider.embed(std::span<const std::string>(texts.data() + start, n));
    for (std::size_t i = 0; i < n; ++i) out[start + i].input = std::move(vecs[i]);
  }
  return out;
}

LinearRetriever::LinearRetriever(LinearHead head, std::shared_ptr<const ToolCatalog> catalog,
                                 std::shared_ptr<const EmbeddingProvider> provider)
    : head_(std::move(head)), catalog_(std::move(catalog)), provider_(std::move(provider)) {
  if (!catalog_ || !provider_) throw std::invalid_argument("linear retriever needs catalog and provider");
  if (head_.tools() != catalog_->size()) {
    throw CatalogMismatch("linear head has " + std::to_string(head_.tools()) + " rows for " +
                          std::to_string(catalog_->size()) + " tools");
  }
}

LinearRetriever LinearRetriever::train(const Corpus& train,
                                       std::shared_ptr<const EmbeddingProvider> provider,
                                       const TrainConfig& config, std::size_t history_len,
                                       double alpha, TrainLog* log,
                                       const std::function<void(int, double)>& on_epoch) {
  if (train.empty()) throw EmptyCorpus("linear retriever needs training demonstrations");
  const auto examples = build_training_examples(train, *provider, history_len);
  LinearHead head = train_linear_head(examples, train.catalog.size(), config, log, on_epoch);
  head.history_len = history_len;
  head.threshold = alpha;
  return LinearRetriever(std::move(head), std::make_shared<const ToolCatalog>(train.catalog),
                         std::move(provider));
}

RetrievalResult LinearRetriever::distribution(std::string_view query,
                                              const History& history) const {
  const auto& calls = history.calls();
  const std::size_t l = std::min(head_.history_len, calls.size());
  const auto text = compose_retrieval_input(
      query, std::span<const ToolName>(calls.data() + (calls.size() - l), l));
  const auto p = head_.softmax(provider_->embed_one(text));
  std::vector<std::pair<ToolName, double>> w;
  w.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) w.emplace_back(catalog_->at(i).name, p[i]);
  return RetrievalResult::from_weights(*catalog_, w);
}

RetrievalResult LinearRetriever::retrieve(std::string_view query, const History& history) const {
  return apply_threshold(distribution(query, history), head_.threshold);
}

// -- BM25 -----------------------------------------------------------------------

Bm25Retriever::Bm25Retriever(std::shared_ptr<const ToolCatalog> catalog, double k1, double b)
    : catalog_(std::move(catalog)), k1_(k1), b_(b) {
  std::size_t total = 0;
  for (const auto& tool : catalog_->tools()) {
    auto tokens = word_tokens(tool.name);
    for (auto& t : word_tokens(tool.description)) tokens.push_back(std::move(t));
    std::map<std::string, std::size_t> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, n] : tf) ++df_[term];
    doc_len_.push_back(tokens.size());
    total += tokens.size();
    tf_.push_back(std::move(tf));
  }
  avg_len_ = static_cast<double>(total) / static_cast<double>(catalog_->size());
}

std::vector<double> Bm25Retriever::scores(std::string_view query) const {
  const double n_docs = static_cast<double>(catalog_->size());
  std::vector<double> out(catalog_->size(), 0.0);
  for (const auto& term : word_tokens(query)) {
    const auto df_it = df_.find(term);
    if (df_it == df_.end()) continue;
    const double df = static_cast<double>(df_it->second);
    const double idf = std::log((n_docs - df + 0.5) / (df + 0.5));
    for (std::size_t d = 0; d < out.size(); ++d) {
      const auto it = tf_[d].find(term);
      if (it == tf_[d].end()) continue;
      const double tf = static_cast<double>(it->second);
      const double norm = avg_len_ > 0.0 ? static_cast<double>(doc_len_[d]) / avg_len_ : 0.0;
      out[d] += idf * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * norm));
    }
  }
  return out;
}

RetrievalResult Bm25Retriever::retrieve(std::string_view query, const History&) const {
  auto s = scores(query);
  const double lo = *std::min_element(s.begin(), s.end());
  if (lo < 0.0) {
    for (double& v : s) v -= lo;
  }
  std::vector<std::pair<ToolName, double>> w;
  for (std::size_t i = 0; i < s.size(); ++i) w.emplace_back(catalog_->at(i).name, s[i]);
  auto r = RetrievalResult::from_weights(*catalog_, w);
  return r.empty() ? RetrievalResult::uniform(*catalog_) : r;
}

// -- QTS ------------------------------------------------------------------------

QtsRetriever::QtsRetriever(std::shared_ptr<const ToolCatalog> catalog,
                           std::shared_ptr<const EmbeddingProvider> provider, QtsVariant variant,
                           const DependencyGraph* graph, std::shared_ptr<const LlmClient> llm)
    : catalog_(std::move(catalog)),
      provider_(std::move(provider)),
      variant_(variant),
      llm_(std::move(llm)) {
  if (variant_ == QtsVariant::less_is_more && !llm_) {
    throw LlmUnavailable("the less-is-more baseline needs an LLM backend");
  }
  if (variant_ == QtsVariant::tool_graph && !graph) {
    throw std::invalid_argument("the tool-graph baseline needs an order-1 dependency graph");
  }
  std::vector<std::string> docs;
  for (const auto& tool : catalog_->tools()) {
    docs.push_back(trim(tool.description).empty() ? tool.name : tool.description);
  }
  tools_ = provider_->embed(docs);
  for (auto& e : tools_) normalize_in_place(e);

  if (variant_ == QtsVariant::tool_graph) {
    std::vector<Embedding> updated = tools_;
    for (std::size_t f = 0; f < tools_.size(); ++f) {
      const auto& t1 = graph->table(1);
      const auto it = t1.find(HistoryKey{catalog_->at(f).name});
      if (it == t1.end()) continue;
      auto& acc = updated[f].values;
      for (const auto& [succ, p] : it->second) {
        const auto& e = tools_[catalog_->ordinal_of(succ)].values;
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p * e[j];
      }
      normalize_in_place(updated[f]);
    }
    tools_ = std::move(updated);
  }
}

std::string QtsRetriever::name() const {
  switch (variant_) {
    case QtsVariant::vanilla:
      return "qts_vanilla";
    case QtsVariant::less_is_more:
      return "qts_lim";
    case QtsVariant::tool_graph:
      return "qts_toolgraph";
  }
  return "qts";
}

RetrievalResult QtsRetriever::retrieve(std::string_view query, const History&) const {
  std::string text(query);
  if (variant_ == QtsVariant::less_is_more) {
    text = llm_->complete(
        "You are an assistant that plans which tools an agent will need.",
        "Describe the ideal set of tools, with a short description of each, for completing "
        "the following task. Do not solve the task.\nTask: " + std::string(query),
        256);
    if (trim(text).empty()) text = query;
  }
  const auto q = provider_->embed_one(text);
  std::vector<double> s(tools_.size());
  for (std::size_t i = 0; i < tools_.size(); ++i) s[i] = cosine(q, tools_[i]);
  return softmax_result(*catalog_, s);
}

// -- random ---------------------------------------------------------------------

RandomRetriever::RandomRetriever(std::shared_ptr<const ToolCatalog> catalog, std::uint64_t seed)
    : catalog_(std::move(catalog)), seed_(seed) {}

RetrievalResult RandomRetriever::retrieve(std::string_view query, const History& history) const {
  std::uint64_t key = fnv1a(query, mix64(seed_));
  key = mix64(key ^ history.position());
  Rng rng(key);
  std::vector<std::size_t> perm(catalog_->size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<std::size_t> rank(perm.size());
  for (std::size_t r = 0; r < perm.size(); ++r) rank[perm[r]] = r;
  std::vector<std::pair<ToolName, double>> w;
  for (const auto& tool : catalog_->tools()) w.emplace_back(tool.name, 1.0);
  return RetrievalResult::from_weights(*catalog_, w, rank);
}

// -- perfect --------------------------------------------------------------------

PerfectRetriever::PerfectRetriever(std::shared_ptr<const ToolCatalog> catalog,
                                   std::span<const Demonstration> truth)
    : catalog_(std::move(catalog)) {
  for (const auto& d : truth) plans_.emplace(d.query, d.plan);
}

RetrievalResult PerfectRetriever::retrieve(std::string_view query, const History& history) const {
  const auto it = plans_.find(query);
  if (it == plans_.end()) return RetrievalResult::uniform(*catalog_);
  const Plan& plan = it->second;
  const std::size_t t = history.position();
  std::vector<std::pair<ToolName, double>> w;
  if (t >= plan.size()) {
    w.emplace_back(std::string(kEndTool), 1.0);
  } else {
    const auto& next = plan.calls()[t].tool;
    w.emplace_back(next, 2.0);
    for (const auto& name : acceptable_after_prefix(plan.dag(), t)) {
      if (name != next) w.emplace_back(name, 1.0);
    }
  }
  return RetrievalResult::from_weights(*catalog_, w);
}

// -- thresholded ----------------------------------------------------------------

ThresholdedRetriever::ThresholdedRetriever(std::unique_ptr<Retriever> inner, double alpha)
    : inner_(std::move(inner)), alpha_(alpha) {
  if (!inner_) throw std::invalid_argument("null retriever");
  if (inner_->graph_based()) {
    throw std::invalid_argument("the alpha filter does not apply to graph-based retrievers");
  }
}

RetrievalResult ThresholdedRetriever::retrieve(std::string_view query,
                                               const History& history) const {
  return apply_threshold(inner_->retrieve(query, history), alpha_);
}

}  // namespace dtdr
