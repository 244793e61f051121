#include <gtest/gtest.h>

#include "dtdr/corpus.hpp"
#include "dtdr/depgraph.hpp"
#include "dtdr/errors.hpp"
#include "dtdr/rng.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

namespace dtdr {
namespace {

std::shared_ptr<const ToolCatalog> share(ToolCatalog c) {
  return std::make_shared<const ToolCatalog>(std::move(c));
}

TEST(DependencyGraph, ForcedCountsOrderOne) {
  auto cat = share(testing::named_catalog({"A"}));
  const std::vector<Demonstration> demos = {testing::chain("q1", {"A"}),
                                            testing::chain("q2", {"A"})};
  const auto g = DependencyGraph::build(cat, demos, 1);
  const DependencyGraph::Table expected = {{{"start"}, {{"A", 1.0}}}, {{"A"}, {{"end", 1.0}}}};
  EXPECT_EQ(g.table(), expected);
}

// Twenty demonstrations share the six-call history of the published example;
// sixteen of them finish right after it.
std::vector<Demonstration> six_call_prefix_demos() {
  const std::vector<std::string> prefix = {"open_and_get_file_path", "get_email_address",
                                           "compose_new_email"};
  std::vector<Demonstration> demos;
  for (int i = 0; i < 16; ++i) demos.push_back(testing::chain("q" + std::to_string(i), prefix));
  for (const char* next :
       {"create_calendar_event", "create_reminder", "summarize_pdf", "append_note_content"}) {
    auto tools = prefix;
    tools.push_back(next);
    demos.push_back(testing::chain(std::string("q_") + next, tools));
  }
  return demos;
}

TEST(DependencyGraph, PublishedSixKeyExample) {
  auto cat = share(tinyagent_builtin_catalog());
  const auto g = DependencyGraph::build(cat, six_call_prefix_demos(), 6);
  const std::vector<ToolName> hist = {"open_and_get_file_path", "get_email_address",
                                      "compose_new_email"};
  EXPECT_EQ(g.key_for(hist), (HistoryKey{"start", "start", "start", "open_and_get_file_path",
                                         "get_email_address", "compose_new_email"}));
  const auto r = g.lookup(hist);
  EXPECT_FALSE(r.backed_off());
  ASSERT_EQ(r.size(), 5u);
  EXPECT_EQ(r.ranking()[0].name, "end");
  EXPECT_EQ(cat->display_name(r.ranking()[0].name), "join");
  EXPECT_NEAR(r.probability("end"), 0.8, 1e-12);
  for (const char* t :
       {"create_calendar_event", "create_reminder", "summarize_pdf", "append_note_content"}) {
    EXPECT_NEAR(r.probability(t), 0.05, 1e-12) << t;
  }
  EXPECT_EQ(to_unweighted(r), (std::set<ToolName>{"end", "create_calendar_event", "create_reminder",
                                                  "summarize_pdf", "append_note_content"}));
}

TEST(DependencyGraph, EmptyHistoryUsesStartKey) {
  auto cat = share(testing::named_catalog({"A", "B"}));
  const std::vector<Demonstration> demos = {testing::chain("q", {"A", "B"}),
                                            testing::chain("r", {"B"})};
  const auto g = DependencyGraph::build(cat, demos, 1);
  const auto r = g.lookup(History(1));
  EXPECT_FALSE(r.backed_off());
  EXPECT_DOUBLE_EQ(r.probability("A"), 0.5);
  EXPECT_DOUBLE_EQ(r.probability("B"), 0.5);
}

TEST(DependencyGraph, BacksOffOneLevel) {
  auto cat = share(testing::named_catalog({"Y", "Z"}));
  const std::vector<Demonstration> demos = {testing::chain("q", {"Y", "Z"})};
  const auto g = DependencyGraph::build(cat, demos, 2);
  const std::vector<ToolName> hist = {"Z", "Z"};
  const auto r = g.lookup(hist);
  EXPECT_TRUE(r.backed_off());
  EXPECT_EQ(r.support(), (std::vector<ToolName>{"end"}));
}

TEST(DependencyGraph, FullMissIsUniform) {
  auto cat = share(testing::named_catalog({"Y", "Z", "W"}));
  const std::vector<Demonstration> demos = {testing::chain("q", {"Y", "Z"})};
  const auto g = DependencyGraph::build(cat, demos, 1);
  const std::vector<ToolName> hist = {"W"};
  const auto r = g.lookup(hist);
  EXPECT_TRUE(r.backed_off());
  EXPECT_EQ(r, [&] {
    auto u = RetrievalResult::uniform(*cat);
    u.set_backed_off(true);
    return u;
  }());
}

TEST(DependencyGraph, RejectsBadInput) {
  auto cat = share(testing::named_catalog({"A"}));
  EXPECT_THROW(DependencyGraph::build(cat, {}, 1), EmptyCorpus);
  const std::vector<Demonstration> demos = {testing::chain("q", {"A"})};
  EXPECT_THROW(DependencyGraph::build(cat, demos, 0), std::invalid_argument);
}

TEST(DependencyGraph, MatchesNaiveCounterAtEveryOrder) {
  auto cat = share(testing::synthetic_catalog(7));
  const auto corpus = testing::random_corpus(*cat, 200, 6, 99);
  const auto g = DependencyGraph::build(cat, corpus.demos, 2);
  for (int n = 1; n <= 2; ++n) {
    const auto naive = testing::naive_window_counts(corpus.demos, n);
    const auto& table = g.table(n);
    ASSERT_EQ(table.size(), naive.size());
    for (const auto& [key, dist] : naive) {
      const auto it = table.find(key);
      ASSERT_NE(it, table.end());
      ASSERT_EQ(it->second.size(), dist.size());
      for (const auto& [tool, p] : dist) EXPECT_NEAR(it->second.at(tool), p, 1e-12);
    }
  }
}

TEST(DependencyGraph, DistributionsSumToOne) {
  auto cat = share(testing::synthetic_catalog(9));
  const auto corpus = testing::random_corpus(*cat, 150, 7, 5);
  const auto g = DependencyGraph::build(cat, corpus.demos, 3);
  for (int n = 1; n <= 3; ++n) {
    for (const auto& [key, dist] : g.table(n)) {
      double s = 0.0;
      for (const auto& [t, p] : dist) {
        EXPECT_GT(p, 0.0);
        s += p;
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(DependencyGraph, AppendingADemoOnlyTouchesItsKeys) {
  auto cat = share(testing::synthetic_catalog(6));
  auto corpus = testing::random_corpus(*cat, 80, 5, 17);
  const auto before = DependencyGraph::build(cat, corpus.demos, 2);
  const auto extra = testing::random_corpus(*cat, 1, 5, 1234).demos.front();
  corpus.demos.push_back(extra);
  const auto after = DependencyGraph::build(cat, corpus.demos, 2);

  std::set<HistoryKey> touched;
  std::vector<ToolName> seq = {"start", "start"};
  for (const auto& c : extra.plan.calls()) seq.push_back(c.tool);
  for (std::size_t i = 2; i < seq.size(); ++i) touched.insert({seq[i - 2], seq[i - 1]});

  for (const auto& [key, dist] : after.table()) {
    if (touched.count(key)) continue;
    const auto it = before.table().find(key);
    ASSERT_NE(it, before.table().end());
    EXPECT_EQ(it->second, dist);
  }
}

TEST(DependencyGraph, ReplayContainsTrueNextTool) {
  auto cat = share(testing::synthetic_catalog(8));
  const auto corpus = testing::random_corpus(*cat, 120, 6, 2);
  const auto g = DependencyGraph::build(cat, corpus.demos, 3);
  for (const auto& d : corpus.demos) {
    History h(3);
    for (const auto& c : d.plan.calls()) {
      const auto r = g.lookup(h);
      EXPECT_FALSE(r.backed_off());
      EXPECT_TRUE(r.contains(c.tool));
      h.push(c.tool);
    }
  }
}

TEST(DependencyGraph, JsonRoundTripAndDeterminism) {
  auto cat = share(testing::synthetic_catalog(6));
  const auto corpus = testing::random_corpus(*cat, 100, 5, 77);
  const auto g = DependencyGraph::build(cat, corpus.demos, 3);
  const auto text = g.to_json();
  EXPECT_EQ(text, DependencyGraph::build(cat, corpus.demos, 3).to_json());
  const auto back = DependencyGraph::from_json(text, cat);
  EXPECT_EQ(back.order(), 3);
  for (int n = 1; n <= 3; ++n) {
    ASSERT_EQ(back.table(n).size(), g.table(n).size());
    for (const auto& [key, dist] : g.table(n)) {
      for (const auto& [t, p] : dist) EXPECT_NEAR(back.table(n).at(key).at(t), p, 1e-12);
    }
  }
  EXPECT_EQ(back.to_json(), text);
  auto other = share(testing::synthetic_catalog(5));
  EXPECT_THROW(DependencyGraph::from_json(text, other), CatalogMismatch);
}

TEST(DependencyGraph, KeyEncoding) {
  const HistoryKey k = {"start", "a", "b"};
  EXPECT_EQ(encode_key(k), "start|a|b");
  EXPECT_EQ(decode_key("start|a|b"), k);
}

}  // namespace
}  // namespace dtdr
