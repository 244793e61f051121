#include <gtest/gtest.h>

#include "dtdr/errors.hpp"
#include "dtdr/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "dtdr/rng.hpp"

namespace dtdr {
namespace {

FunctionCall call(std::size_t step, std::string tool, Arguments args = {}) {
  return {step, std::move(tool), std::move(args)};
}

TEST(PlanDag, SingleReferenceGivesOneEdge) {
  const std::vector<FunctionCall> calls = {call(0, "A"), call(1, "B", {{"x", OutputRef{0}}}),
                                           call(2, "end")};
  const auto dag = build_plan_dag(calls);
  ASSERT_EQ(dag.nodes.size(), 3u);
  EXPECT_EQ(dag.edges, (std::vector<PlanDag::Edge>{{0, 1}}));
}

TEST(PlanDag, IndependentCallsHaveNoEdges) {
  const std::vector<FunctionCall> calls = {call(0, "A", {{"x", Literal{"1"}}}), call(1, "B"),
                                           call(2, "end")};
  EXPECT_TRUE(build_plan_dag(calls).edges.empty());
}

TEST(PlanDag, CallConsumingTwoOutputs) {
  const std::vector<FunctionCall> calls = {
      call(0, "A"), call(1, "B"), call(2, "C"),
      call(3, "D", {{"p", OutputRef{1}}, {"q", OutputRef{2}}}), call(4, "end")};
  EXPECT_EQ(build_plan_dag(calls).edges, (std::vector<PlanDag::Edge>{{1, 3}, {2, 3}}));
}

TEST(PlanDag, DuplicateReferencesCollapse) {
  const std::vector<FunctionCall> calls = {
      call(0, "A"), call(1, "B", {{"p", OutputRef{0}}, {"q", OutputRef{0}}}), call(2, "end")};
  EXPECT_EQ(build_plan_dag(calls).edges.size(), 1u);
}

TEST(PlanDag, ForwardOrSelfReferenceIsMalformed) {
  EXPECT_THROW(build_plan_dag(std::vector<FunctionCall>{call(0, "A", {{"x", OutputRef{1}}}),
                                                        call(1, "end")}),
               MalformedRef);
  EXPECT_THROW(build_plan_dag(std::vector<FunctionCall>{call(0, "A", {{"x", OutputRef{0}}}),
                                                        call(1, "end")}),
               MalformedRef);
  EXPECT_THROW(build_plan_dag(std::vector<FunctionCall>{call(0, "A"),
                                                        call(1, "B", {{"x", OutputRef{7}}}),
                                                        call(2, "end")}),
               MalformedRef);
}

TEST(Plan, MustEndWithTerminal) {
  EXPECT_THROW(Plan({call(0, "A")}), std::invalid_argument);
  EXPECT_NO_THROW(Plan({call(0, "A"), call(1, "end")}));
}

TEST(AcceptableNext, ChainStartsAtSource) {
  const Plan p({call(0, "A"), call(1, "B", {{"x", OutputRef{0}}}), call(2, "end")});
  EXPECT_EQ(acceptable_next_tools(p.dag(), {}), (std::set<ToolName>{"A"}));
}

TEST(AcceptableNext, EndIsGatedUntilEverythingElseRan) {
  const Plan p({call(0, "A"), call(1, "B"), call(2, "end")});
  EXPECT_EQ(acceptable_next_tools(p.dag(), {}), (std::set<ToolName>{"A", "B"}));
  EXPECT_EQ(acceptable_next_tools(p.dag(), {0}), (std::set<ToolName>{"B"}));
  EXPECT_EQ(acceptable_next_tools(p.dag(), {0, 1}), (std::set<ToolName>{"end"}));
}

TEST(AcceptableNext, DuplicateToolCountsOnce) {
  const Plan p({call(0, "A"), call(1, "A"), call(2, "end")});
  EXPECT_EQ(acceptable_next_tools(p.dag(), {}), (std::set<ToolName>{"A"}));
}

TEST(AcceptableNext, MatchesNaiveFrontierOnRandomPlans) {
  const auto catalog = testing::synthetic_catalog(6);
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const Plan p = testing::random_plan(catalog, 1 + rng.below(6), rng.next());
    for (std::size_t t = 0; t <= p.size(); ++t) {
      std::set<std::size_t> executed;
      for (std::size_t i = 0; i < t; ++i) executed.insert(i);
      EXPECT_EQ(acceptable_after_prefix(p.dag(), t), testing::naive_frontier(p, executed));
    }
  }
}

TEST(AcceptableNext, GroundTruthReplayIsSelfConsistent) {
  const auto catalog = testing::synthetic_catalog(8);
  const auto corpus = testing::random_corpus(catalog, 200, 6, 3);
  for (const auto& d : corpus.demos) {
    for (std::size_t t = 0; t < d.plan.size(); ++t) {
      EXPECT_TRUE(acceptable_after_prefix(d.plan.dag(), t).count(d.plan.calls()[t].tool));
    }
  }
}

TEST(Catalog, ValidatesNames) {
  EXPECT_THROW(ToolCatalog(std::vector<ToolSpec>{{"a", "", {}}}), std::invalid_argument);  // no end
  EXPECT_THROW(ToolCatalog(std::vector<ToolSpec>{{"start", "", {}}, {"end", "", {}}}), std::invalid_argument);
  EXPECT_THROW(ToolCatalog(std::vector<ToolSpec>{{"a", "", {}}, {"a", "", {}}, {"end", "", {}}}),
               std::invalid_argument);
  EXPECT_THROW(ToolCatalog(std::vector<ToolSpec>{{"a", "", {{"x", "", false, ""}, {"x", "", true, ""}}},
                            {"end", "", {}}}),
               std::invalid_argument);
}

TEST(Catalog, OrdinalsAndAlias) {
  const ToolCatalog c(std::vector<ToolSpec>{{"a", "", {}}, {"b", "", {}}, {"end", "", {}}}, "join");
  EXPECT_EQ(c.ordinal_of("b"), 1u);
  EXPECT_EQ(c.user_tool_count(), 2u);
  EXPECT_EQ(c.display_name("end"), "join");
  EXPECT_EQ(c.canonical_name("join"), "end");
  EXPECT_THROW(c.get("zzz"), UnknownTool);
  EXPECT_EQ(c.fingerprint(), ToolCatalog(c.tools(), "join").fingerprint());
}

TEST(History, TruncatesOldestAndCountsPosition) {
  History h(2);
  for (const char* t : {"a", "b", "c"}) h.push(t);
  EXPECT_EQ(h.calls(), (std::vector<ToolName>{"b", "c"}));
  EXPECT_EQ(h.position(), 3u);
}

TEST(RetrievalResult, NormalizesAndBreaksTiesByOrdinal) {
  const ToolCatalog c(std::vector<ToolSpec>{{"a", "", {}}, {"b", "", {}}, {"c", "", {}}, {"end", "", {}}});
  const std::vector<std::pair<ToolName, double>> w = {{"c", 1.0}, {"a", 1.0}, {"b", 2.0},
                                                      {"end", 0.0}};
  const auto r = RetrievalResult::from_weights(c, w);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r.ranking()[0].name, "b");
  EXPECT_EQ(r.ranking()[1].name, "a");
  EXPECT_EQ(r.ranking()[2].name, "c");
  EXPECT_DOUBLE_EQ(r.probability("b"), 0.5);
  EXPECT_FALSE(r.contains("end"));
}

TEST(RetrievalResult, RejectsBadWeights) {
  const ToolCatalog c(std::vector<ToolSpec>{{"a", "", {}}, {"end", "", {}}});
  const std::vector<std::pair<ToolName, double>> neg = {{"a", -1.0}};
  const std::vector<std::pair<ToolName, double>> unknown = {{"zz", 1.0}};
  EXPECT_THROW(RetrievalResult::from_weights(c, neg), std::invalid_argument);
  EXPECT_THROW(RetrievalResult::from_weights(c, unknown), UnknownTool);
}

}  // namespace
}  // namespace dtdr
