#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dtdr/corpus.hpp"
#include "dtdr/experiment.hpp"
#include "dtdr/metrics.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace dtdr {
namespace {

struct Run {
  int status = -1;
  std::string out;
};

#ifdef DTDR_CLI_PATH
Run dtdr(const std::string& args) {
  const std::string cmd = std::string(DTDR_CLI_PATH) + " -q " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}
#endif

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dtdr_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// a -> b and b -> a: order-1 keys are start, a and b.
fs::path two_plan_corpus() {
  const auto dir = scratch("two_plans");
  Corpus c;
  c.catalog = testing::named_catalog({"a", "b"});
  c.demos.push_back(testing::chain("first a then b", {"a", "b"}));
  c.demos.push_back(testing::chain("first b then a", {"b", "a"}));
  save_corpus(c, dir / "data");
  return dir;
}

// Linked tinyagent chains, split by hand so the test does not depend on the
// split command.
fs::path chain_split() {
  const auto dir = scratch("chains");
  auto c = testing::tinyagent_chain_corpus(60, 17);
  Corpus train, test;
  train.catalog = test.catalog = c.catalog;
  train.name = test.name = "chains";
  for (std::size_t i = 0; i < c.size(); ++i) (i % 4 == 3 ? test : train).demos.push_back(c.demos[i]);
  save_corpus(train, dir / "train");
  save_corpus(test, dir / "test");
  return dir;
}

#ifdef DTDR_CLI_PATH

TEST(Cli, HelpExitsZeroForEverySubcommand) {
  EXPECT_EQ(dtdr("--help").status, 0);
  for (const char* sub : {"ingest", "split", "build-graph", "train", "eval", "sweep", "report"}) {
    const auto r = dtdr(std::string(sub) + " --help");
    EXPECT_EQ(r.status, 0) << sub;
    EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
  }
}

TEST(Cli, InvalidFlagIsUsageErrorAndWritesNothing) {
  const auto dir = two_plan_corpus();
  EXPECT_EQ(dtdr("build-graph --data " + (dir / "data").string() + " --order 0 --out " +
                 (dir / "g.json").string()).status,
            1);
  EXPECT_EQ(dtdr("build-graph --no-such-flag --data " + (dir / "data").string() + " --out " +
                 (dir / "g.json").string()).status,
            1);
  EXPECT_EQ(dtdr("eval --train x --test y --out " + (dir / "rep").string() + " --method nope").status, 1);
  EXPECT_FALSE(fs::exists(dir / "g.json"));
  EXPECT_FALSE(fs::exists(dir / "rep"));
}

TEST(Cli, UndeclaredToolExitsTwo) {
  const auto dir = scratch("missing");
  fs::create_directories(dir / "data");
  std::ofstream(dir / "data" / "catalog.json") << R"([{"name": "a"}, {"name": "end"}])";
  std::ofstream(dir / "data" / "demos.jsonl") << R"({"query": "q", "plan": [{"tool": "zz"}, {"tool": "end"}]})";
  EXPECT_EQ(dtdr("build-graph --order 1 --data " + (dir / "data").string() + " --out " +
                 (dir / "g.json").string()).status,
            2);
}

TEST(Cli, BuildGraphOrderOneHasThreeKeysAndIsReproducible) {
  const auto dir = two_plan_corpus();
  const auto out1 = dir / "g1.json", out2 = dir / "g2.json";
  ASSERT_EQ(dtdr("build-graph --order 1 --data " + (dir / "data").string() + " --out " + out1.string()).status, 0);
  ASSERT_EQ(dtdr("build-graph --order 1 --data " + (dir / "data").string() + " --out " + out2.string()).status, 0);
  const auto text = slurp(out1);
  EXPECT_EQ(text, slurp(out2));
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j.at("order"), 1);
  EXPECT_EQ(j.at("graph").size(), 3u);
}

TEST(Cli, TrainIsSeededAndReducesLoss) {
  const auto dir = chain_split();
  const std::string data = " --data " + (dir / "train").string();
  const auto r1 = dtdr("--seed 9 train --epochs 5 --lr 0.05" + data + " --out " + (dir / "h1.json").string());
  const auto r2 = dtdr("--seed 9 train --epochs 5 --lr 0.05" + data + " --out " + (dir / "h2.json").string());
  ASSERT_EQ(r1.status, 0) << r1.out;
  ASSERT_EQ(r2.status, 0) << r2.out;
  EXPECT_EQ(slurp(dir / "h1.json"), slurp(dir / "h2.json"));

  double initial = 0.0, final_loss = 0.0;
  ASSERT_EQ(std::sscanf(r1.out.c_str() + r1.out.find("initial loss"), "initial loss %lf", &initial), 1);
  ASSERT_EQ(std::sscanf(r1.out.c_str() + r1.out.find("final loss"), "final loss %lf", &final_loss), 1);
  EXPECT_LT(final_loss / initial, 0.5);

  const auto r0 = dtdr("train --epochs 0" + data + " --out " + (dir / "h0.json").string());
  ASSERT_EQ(r0.status, 0) << r0.out;
  EXPECT_TRUE(nlohmann::json::accept(slurp(dir / "h0.json")));
}

std::vector<ReportRow> eval_rows(const fs::path& dir, const std::string& args, const std::string& tag) {
  const auto out = dir / tag;
  const auto r = dtdr("eval --train " + (dir / "train").string() + " --test " + (dir / "test").string() +
                      " --out " + out.string() + " " + args);
  EXPECT_EQ(r.status, 0) << r.out;
  return report_from_json(slurp(out / "report.json"));
}

TEST(Cli, SingleClusterOrderOneMatchesStaticGraph) {
  const auto dir = chain_split();
  const auto c = eval_rows(dir, "--method dtdr_c --clusters 1 --order 1", "c");
  const auto s = eval_rows(dir, "--method static_dr --order 1", "s");
  ASSERT_EQ(c.size(), 1u);
  ASSERT_EQ(s.size(), 1u);
  ASSERT_TRUE(c[0].report.mrr && s[0].report.mrr);
  EXPECT_DOUBLE_EQ(*c[0].report.mrr, *s[0].report.mrr);
  EXPECT_DOUBLE_EQ(*c[0].report.f1, *s[0].report.f1);
  EXPECT_DOUBLE_EQ(c[0].report.mean_retrieved, s[0].report.mean_retrieved);
}

TEST(Cli, PerfectRetrieverWithExactOracleSolvesEveryPlan) {
  const auto dir = chain_split();
  const auto rows = eval_rows(dir, "--method perfect --backend oracle --epsilon 0 --mode free_running", "p");
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_TRUE(rows[0].report.success_rate);
  EXPECT_DOUBLE_EQ(*rows[0].report.success_rate, 1.0);
  EXPECT_EQ(rows[0].report.plans, 15u);
  EXPECT_TRUE(fs::exists(dir / "p" / "report.csv"));
}

TEST(Cli, ReportMergesRows) {
  const auto dir = chain_split();
  eval_rows(dir, "--method bm25", "a");
  eval_rows(dir, "--method random", "b");
  const auto r = dtdr("report " + (dir / "a" / "report.json").string() + " " +
                      (dir / "b" / "report.json").string() + " --out " + (dir / "m").string());
  ASSERT_EQ(r.status, 0) << r.out;
  const auto rows = report_from_json(slurp(dir / "m" / "report.json"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "bm25");
  EXPECT_EQ(rows[1].method, "random");
}

#endif  // DTDR_CLI_PATH

TEST(Experiment, ParseSweep) {
  auto s = parse_sweep("history_len=0..3");
  EXPECT_EQ(s.param, "history_len");
  EXPECT_EQ(s.values, (std::vector<std::size_t>{0, 1, 2, 3}));
  s = parse_sweep("clusters=1,10,100");
  EXPECT_EQ(s.values, (std::vector<std::size_t>{1, 10, 100}));
  EXPECT_THROW(parse_sweep("epochs=1,2"), std::invalid_argument);
  EXPECT_THROW(parse_sweep("clusters="), std::invalid_argument);
  EXPECT_THROW(parse_sweep("history_len=3..1"), std::invalid_argument);
}

TEST(Experiment, SweepPointSetsOrderForGraphMethods) {
  RunConfig c;
  c.method = Method::static_dr;
  const auto p = apply_sweep_point(c, "history_len", 2);
  EXPECT_EQ(p.history_len, 2u);
  EXPECT_EQ(p.order, 2);
  EXPECT_EQ(apply_sweep_point(c, "clusters", 7).clusters, 7u);
}

TEST(Experiment, SubsampleIsSeededPrefix) {
  const auto c = testing::tinyagent_chain_corpus(30, 3);
  const auto a = subsample(c, 10, 1), b = subsample(c, 10, 1);
  ASSERT_EQ(a.size(), 10u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.demos[i].query, b.demos[i].query);
  EXPECT_EQ(subsample(c, 100, 1).size(), 30u);
}

TEST(Experiment, ParallelEvaluationKeepsOrder) {
  const auto c = testing::tinyagent_chain_corpus(48, 5);
  Corpus train, test;
  train.catalog = test.catalog = c.catalog;
  for (std::size_t i = 0; i < c.size(); ++i) (i % 3 == 0 ? test : train).demos.push_back(c.demos[i]);
  RunConfig cfg;
  cfg.method = Method::bm25;
  cfg.mode = EvalMode::teacher_forced;
  const auto provider = std::make_shared<HashedEmbeddingProvider>();
  const auto retriever = make_retriever(cfg, train, test, provider);
  const OracleBackend oracle(OracleConfig{0.3, 4});
  const auto templates = PromptTemplates::defaults();
  const auto serial = run_evaluation(cfg, train, test, *retriever, &oracle, templates);
  cfg.jobs = 4;
  const auto parallel = run_evaluation(cfg, train, test, *retriever, &oracle, templates);
  ASSERT_EQ(serial.steps.size(), parallel.steps.size());
  for (std::size_t i = 0; i < serial.steps.size(); ++i) {
    EXPECT_EQ(serial.steps[i].query_id, parallel.steps[i].query_id);
    EXPECT_EQ(serial.steps[i].step, parallel.steps[i].step);
    EXPECT_EQ(serial.steps[i].selected, parallel.steps[i].selected);
  }
}

}  // namespace
}  // namespace dtdr
