// dtdr: build dependency graphs, train retrieval heads, run evaluations.
//
// Exit codes: 0 ok, 1 usage, 2 input schema, 3 non-finite training loss,
// 4 backend/LLM unavailable, 5 other runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dtdr/agent.hpp"
#include "dtdr/corpus.hpp"
#include "dtdr/depgraph.hpp"
#include "dtdr/embedding.hpp"
#include "dtdr/errors.hpp"
#include "dtdr/experiment.hpp"
#include "dtdr/metrics.hpp"
#include "dtdr/prompt.hpp"
#include "dtdr/retriever.hpp"

namespace fs = std::filesystem;
using namespace dtdr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kSchema = 2, kNonFinite = 3, kUnavailable = 4, kRuntime = 5 };

struct Globals {
  std::string workdir;
  std::uint64_t seed = 5006;
  bool quiet = false;

  fs::path resolve(const std::string& p) const {
    if (p.empty() || workdir.empty() || fs::path(p).is_absolute()) return p;
    return fs::path(workdir) / p;
  }
};

void log(const Globals& g, const std::string& msg) {
  if (!g.quiet) std::cerr << msg << '\n';
}

// Writes to a sibling temp file and renames, so a failed run leaves nothing
// half-written behind.
void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct EmbedOptions {
  std::string kind = "hashed";
  std::size_t dim = 256;
  std::string endpoint;

  void add(CLI::App* cmd) {
    cmd->add_option("--embedder", kind, "hashed or remote")
        ->check(CLI::IsMember({"hashed", "remote"}))
        ->capture_default_str();
    cmd->add_option("--embed-dim", dim, "hashed embedding dimension")
        ->check(CLI::Range(8, 1 << 16))
        ->capture_default_str();
    cmd->add_option("--embed-endpoint", endpoint, "base URL of the /embed service");
  }

  std::shared_ptr<const EmbeddingProvider> make() const {
    ProviderConfig pc;
    pc.kind = kind == "remote" ? ProviderConfig::Kind::remote : ProviderConfig::Kind::hashed;
    pc.dim = dim;
    pc.endpoint = endpoint;
    if (pc.kind == ProviderConfig::Kind::remote && endpoint.empty()) {
      throw std::invalid_argument("--embed-endpoint is required with --embedder remote");
    }
    return make_provider(pc);
  }
};

Corpus load_canonical_corpus(const Globals& g, const std::string& dir) {
  return load_corpus(g.resolve(dir), CorpusFormat::canonical);
}

// -- ingest / split -----------------------------------------------------------

struct IngestCmd {
  std::string input, format = "canonical", out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("ingest", "Convert a dataset to the canonical layout");
    cmd->add_option("--input", input, "dataset directory")->required();
    cmd->add_option("--format", format, "canonical, tinyagent or taskbench")
        ->check(CLI::IsMember({"canonical", "tinyagent", "taskbench"}))
        ->capture_default_str();
    cmd->add_option("--out", out, "output directory")->required();
  }

  int run(const Globals& g) const {
    Corpus corpus = load_corpus(g.resolve(input), parse_corpus_format(format));
    save_corpus(corpus, g.resolve(out));
    const auto s = corpus_stats(corpus);
    std::printf("plans %zu\ntools %zu\ncalls %.2f +- %.2f\ndeps %.2f +- %.2f\n", s.plans, s.tools,
                s.calls_mean, s.calls_sd, s.deps_mean, s.deps_sd);
    return kOk;
  }
};

struct SplitCmd {
  std::string data, out;
  double fraction = 0.7;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("split", "Stratified train/test split");
    cmd->add_option("--data", data, "canonical corpus directory")->required();
    cmd->add_option("--train-fraction", fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--out", out, "writes <out>/train and <out>/test")->required();
  }

  int run(const Globals& g) const {
    const Corpus corpus = load_canonical_corpus(g, data);
    const auto result = stratified_split(corpus, SplitSpec{fraction, g.seed});
    for (const auto& w : result.warnings) log(g, "warning: " + w);
    save_corpus(result.train, g.resolve(out) / "train");
    save_corpus(result.test, g.resolve(out) / "test");
    std::printf("train %zu\ntest %zu\n", result.train.size(), result.test.size());
    return kOk;
  }
};

// -- build-graph --------------------------------------------------------------

struct BuildGraphCmd {
  std::string data, out;
  int order = 3;
  std::optional<std::size_t> clusters;
  EmbedOptions embed;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand(
        "build-graph", "Build an order-N dependency graph, or DTDR-C models with --clusters");
    cmd->add_option("--data", data, "canonical training corpus")->required();
    cmd->add_option("--order", order, "Markov order N")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--clusters", clusters, "cluster queries into K graphs (output is a directory)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out", out, "graph file, or model directory with --clusters")->required();
    embed.add(cmd);
  }

  int run(const Globals& g) const {
    const Corpus corpus = load_canonical_corpus(g, data);
    auto catalog = std::make_shared<const ToolCatalog>(corpus.catalog);
    if (clusters) {
      const auto model = DtdrCRetriever::fit(corpus, *clusters, order, embed.make(), g.seed);
      const fs::path dir = g.resolve(out);
      fs::path staging = dir;
      staging += ".tmp";
      fs::remove_all(staging);
      model.save(staging);
      fs::remove_all(dir);
      fs::rename(staging, dir);
      const auto sizes = model.model().kmeans.cluster_sizes();
      std::printf("clusters %zu\n", sizes.size());
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        std::printf("cluster %zu: %zu demos, %zu keys, entropy %.4f\n", k, sizes[k],
                    model.model().graphs[k].table().size(), model.model().graphs[k].mean_entropy());
      }
      return kOk;
    }
    const auto graph = DependencyGraph::build(catalog, corpus.demos, order);
    write_atomic(g.resolve(out), graph.to_json());
    for (int n = 1; n <= order; ++n) {
      std::printf("order %d: %zu keys\n", n, graph.table(n).size());
    }
    std::printf("mean entropy %.4f\n", graph.mean_entropy());
    return kOk;
  }
};

// -- train --------------------------------------------------------------------

struct TrainCmd {
  std::string data, out, method = "dtdr_l";
  std::size_t history_len = 3;
  double alpha = 0.2;
  TrainConfig config;
  bool no_bias = false;
  EmbedOptions embed;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "Train a linear retrieval head");
    cmd->add_option("--data", data, "canonical training corpus")->required();
    cmd->add_option("--method", method, "dtdr_l or static_lr")
        ->check(CLI::IsMember({"dtdr_l", "static_lr"}))
        ->capture_default_str();
    cmd->add_option("--history-len", history_len, "l (ignored by static_lr)")->capture_default_str();
    cmd->add_option("--alpha", alpha, "retrieval threshold stored with the model")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    cmd->add_option("--epochs", config.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--lr", config.learning_rate)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--lr-decay", config.lr_decay)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--weight-decay", config.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--batch-size", config.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_flag("--no-bias", no_bias, "train without the bias vector");
    cmd->add_option("--out", out, "model file")->required();
    embed.add(cmd);
  }

  int run(const Globals& g) const {
    const Corpus corpus = load_canonical_corpus(g, data);
    TrainConfig tc = config;
    tc.seed = g.seed;
    tc.bias = !no_bias;
    const std::size_t l = method == "static_lr" ? 0 : history_len;
    TrainLog tl;
    auto retriever = LinearRetriever::train(corpus, embed.make(), tc, l, alpha, &tl,
                                            [&](int epoch, double loss) {
                                              char buf[64];
                                              std::snprintf(buf, sizeof buf, "epoch %d loss %.6f",
                                                            epoch, loss);
                                              log(g, buf);
                                            });
    write_atomic(g.resolve(out),
                 retriever.head().to_json(corpus.catalog.fingerprint(), corpus.catalog.names()));
    std::printf("initial loss %.6f\n", tl.initial_loss);
    if (!tl.epoch_loss.empty()) std::printf("final loss %.6f\n", tl.epoch_loss.back());
    return kOk;
  }
};

// -- eval / sweep -------------------------------------------------------------

struct EvalCmd {
  std::string train, test, out, method = "dtdr_l", icl = "hard_mask", mode = "retrieval";
  std::string backend = "oracle", endpoint, llm_model, model_path, templates_dir, dataset;
  std::string sweep;
  double epsilon = 0.0;
  RunConfig config;
  EmbedOptions embed;
  bool is_sweep = false;

  void add(CLI::App& app, bool sweep_command) {
    is_sweep = sweep_command;
    auto* cmd = sweep_command ? app.add_subcommand("sweep", "Evaluate over a parameter sweep")
                              : app.add_subcommand("eval", "Evaluate a retriever");
    cmd->add_option("--train", train, "canonical training corpus")->required();
    cmd->add_option("--test", test, "canonical test corpus")->required();
    cmd->add_option("--out", out, "report directory")->required();
    cmd->add_option("--method", method)
        ->check(CLI::IsMember({"random", "bm25", "qts_vanilla", "qts_lim", "qts_toolgraph",
                               "static_dr", "static_lr", "dtdr_c", "dtdr_l", "perfect"}))
        ->capture_default_str();
    cmd->add_option("--model", model_path, "saved graph, head or DTDR-C directory");
    cmd->add_option("--icl", icl)
        ->check(CLI::IsMember({"no_icl", "raw_demos", "hard_mask", "hard_mask_weighted",
                               "soft_mask", "soft_mask_weighted"}))
        ->capture_default_str();
    cmd->add_option("--mode", mode)
        ->check(CLI::IsMember({"retrieval", "teacher_forced", "free_running", "all"}))
        ->capture_default_str();
    cmd->add_option("--backend", backend, "oracle or remote")
        ->check(CLI::IsMember({"oracle", "remote"}))
        ->capture_default_str();
    cmd->add_option("--epsilon", epsilon, "oracle noise")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--endpoint", endpoint, "chat-completions URL for --backend remote");
    cmd->add_option("--llm-model", llm_model, "model name sent to the chat endpoint");
    cmd->add_option("--history-len", config.history_len)->capture_default_str();
    cmd->add_option("--order", config.order)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--clusters", config.clusters, "0 picks ceil(|train|/10)")->capture_default_str();
    cmd->add_option("--alpha", config.alpha)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cmd->add_option("--max-iters", config.max_iters)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--max-demos", config.icl.max_demos)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--epochs", config.train.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
    cmd->add_option("--jobs", config.jobs)->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--templates-dir", templates_dir, "override prompt templates");
    cmd->add_option("--dataset-name", dataset, "label for report rows");
    auto* s = cmd->add_option("--sweep", sweep, "history_len=0..5 | clusters=1,10,100 | demos=100,1000");
    if (sweep_command) s->required();
    embed.add(cmd);
  }

  int run(const Globals& g) {
    // Parse and validate everything before touching the output directory.
    config.method = parse_method(method);
    const std::size_t max_demos = config.icl.max_demos;
    config.icl = parse_icl_strategy(icl);
    config.icl.max_demos = max_demos;
    config.mode = parse_eval_mode(mode);
    config.seed = g.seed;
    std::optional<SweepSpec> spec;
    if (!sweep.empty()) spec = parse_sweep(sweep);
    if (spec && !model_path.empty()) throw std::invalid_argument("--sweep retrains models; drop --model");
    if (backend == "remote" && (endpoint.empty() || llm_model.empty())) {
      throw std::invalid_argument("--backend remote needs --endpoint and --llm-model");
    }

    const Corpus train_corpus = load_canonical_corpus(g, train);
    const Corpus test_corpus = load_canonical_corpus(g, test);
    if (train_corpus.catalog.fingerprint() != test_corpus.catalog.fingerprint()) {
      throw CatalogMismatch("train and test catalogs differ");
    }
    const auto templates = templates_dir.empty()
                               ? PromptTemplates::defaults()
                               : PromptTemplates::with_overrides(g.resolve(templates_dir));
    const auto provider = embed.make();

    std::shared_ptr<ChatBackend> chat;
    std::unique_ptr<OracleBackend> oracle;
    const AgentBackend* agent = nullptr;
    if (backend == "remote") {
      ChatConfig cc;
      cc.endpoint = endpoint;
      cc.model = llm_model;
      chat = std::make_shared<ChatBackend>(cc);
      agent = chat.get();
    } else {
      oracle = std::make_unique<OracleBackend>(OracleConfig{epsilon, g.seed});
      agent = oracle.get();
    }
    const bool retrieval_only = config.mode == EvalMode::retrieval;
    const std::string model_label = retrieval_only ? "none" : agent->name();

    struct Point {
      RunConfig cfg;
      std::size_t demos;
      std::string value;
    };
    std::vector<Point> points;
    if (spec) {
      for (std::size_t v : spec->values) {
        points.push_back({apply_sweep_point(config, spec->param, v),
                          spec->param == "demos" ? v : train_corpus.size(), std::to_string(v)});
      }
    } else {
      points.push_back({config, train_corpus.size(), {}});
    }
    for (const auto& p : points) p.cfg.validate(!retrieval_only);

    std::vector<ReportRow> rows;
    for (const auto& p : points) {
      const Corpus tr = subsample(train_corpus, p.demos, g.seed);
      std::unique_ptr<Retriever> retriever;
      if (!model_path.empty()) {
        retriever = load_retriever(p.cfg.method, g.resolve(model_path),
                                   std::make_shared<const ToolCatalog>(tr.catalog), provider,
                                   p.cfg.alpha);
      } else {
        retriever = make_retriever(p.cfg, tr, test_corpus, provider, chat);
      }
      const auto result = run_evaluation(p.cfg, tr, test_corpus, *retriever,
                                         retrieval_only ? nullptr : agent, templates);
      ReportRow row;
      row.dataset = dataset.empty() ? test_corpus.name : dataset;
      row.method = std::string(to_string(p.cfg.method));
      row.model = model_label;
      row.icl = to_string(p.cfg.icl);
      if (spec) {
        row.sweep_param = spec->param;
        row.sweep_value = p.value;
      }
      row.report = aggregate(result.steps, result.plans, test_corpus.catalog);
      if (spec) log(g, spec->param + "=" + p.value + " done");
      rows.push_back(std::move(row));
    }

    const fs::path dir = g.resolve(out);
    write_atomic(dir / "report.json", report_to_json(rows));
    write_atomic(dir / "report.csv", report_to_csv(rows));
    std::cout << report_to_csv(rows);
    return kOk;
  }
};

// -- report -------------------------------------------------------------------

struct ReportCmd {
  std::vector<std::string> inputs;
  std::string out;

  void add(CLI::App& app) {
    auto* cmd = app.add_subcommand("report", "Merge report.json files into one report");
    cmd->add_option("inputs", inputs, "report.json files")->required();
    cmd->add_option("--out", out, "directory for the merged report.json/report.csv");
  }

  int run(const Globals& g) const {
    std::vector<ReportRow> rows;
    for (const auto& in : inputs) {
      std::ifstream f(g.resolve(in), std::ios::binary);
      if (!f) throw std::runtime_error("cannot read " + in);
      std::ostringstream ss;
      ss << f.rdbuf();
      for (auto& r : report_from_json(ss.str(), in)) rows.push_back(std::move(r));
    }
    if (!out.empty()) {
      write_atomic(g.resolve(out) / "report.json", report_to_json(rows));
      write_atomic(g.resolve(out) / "report.csv", report_to_csv(rows));
    }
    std::cout << report_to_csv(rows);
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic tool dependency retrieval for function-calling agents"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value configuration file (flags take precedence)");
  Globals g;
  app.add_option("--workdir", g.workdir, "base directory for relative paths");
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_flag("-q,--quiet", g.quiet, "suppress progress on stderr");

  IngestCmd ingest;
  SplitCmd split;
  BuildGraphCmd build_graph;
  TrainCmd train;
  EvalCmd eval, sweep;
  ReportCmd report;
  ingest.add(app);
  split.add(app);
  build_graph.add(app);
  train.add(app);
  eval.add(app, false);
  sweep.add(app, true);
  report.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "ingest") return ingest.run(g);
    if (name == "split") return split.run(g);
    if (name == "build-graph") return build_graph.run(g);
    if (name == "train") return train.run(g);
    if (name == "eval") return eval.run(g);
    if (name == "sweep") return sweep.run(g);
    if (name == "report") return report.run(g);
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const CatalogMismatch& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const UnknownTool& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const MalformedRef& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kSchema;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kNonFinite;
  } catch (const BackendUnavailable& e) {
    std::cerr << "backend unavailable: " << e.what() << '\n';
    return kUnavailable;
  } catch (const LlmUnavailable& e) {
    std::cerr << "llm unavailable: " << e.what() << '\n';
    return kUnavailable;
  } catch (const RemoteUnavailable& e) {
    std::cerr << "embedding service unavailable: " << e.what() << '\n';
    return kUnavailable;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
