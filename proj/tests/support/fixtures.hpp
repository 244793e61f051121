#pragma once

// Synthetic corpora shared by the unit and acceptance tests.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dtdr/corpus.hpp"
#include "dtdr/model.hpp"
#include "dtdr/rng.hpp"

namespace dtdr::testing {

/// tool_00 .. tool_{n-1} with 0-2 string params each, then "end".
ToolCatalog synthetic_catalog(std::size_t n_tools);

/// Builds a catalog from bare names (plus "end"), no parameters.
ToolCatalog named_catalog(const std::vector<std::string>& names);

/// Random plans over `catalog`: 1..max_calls non-terminal calls, each argument
/// a literal or a reference to a random earlier call, then "end".
Corpus random_corpus(const ToolCatalog& catalog, std::size_t plans, std::size_t max_calls,
                     std::uint64_t seed);

/// Random plan over `catalog` with exactly `calls` non-terminal calls.
Plan random_plan(const ToolCatalog& catalog, std::size_t calls, std::uint64_t seed,
                 double ref_probability = 0.4);

/// Linear demo: tools in order, each taking the previous output as "input",
/// then "end".
Demonstration chain(std::string query, const std::vector<std::string>& tools);

/// The same plan with its calls emitted in another topological order; end
/// stays last.
std::vector<FunctionCall> reorder_topologically(const Plan& plan, Rng& rng);

/// A truth plan of at most 6 nodes and a prediction: an unrelated plan, a
/// reordering of the truth, or a reordering with one argument perturbed.
struct PlanPair {
  std::vector<FunctionCall> predicted;
  Plan truth;
};
PlanPair random_plan_pair(const ToolCatalog& catalog, Rng& rng);

/// Query text drawn from a topic family's vocabulary. Different families
/// share no words.
std::string family_query(std::size_t family, std::uint64_t seed);
std::size_t family_count();

/// Two query families, [S,T,P,end] and [S,T,Q,end], `per_family` each.
Corpus separation_corpus(std::size_t per_family, std::uint64_t seed);

/// Eight tools in two query clusters. Plans are [A, B, C, end]: the query
/// names the first tool; B depends on (cluster, A) and C on the cluster.
/// Steps 1 and 2 are the history-dependent ones.
Corpus learnability_corpus(std::size_t demos, std::uint64_t seed);

/// `families` query families, each with its own chain over a shared tool set
/// so that order-1 transitions conflict across families.
Corpus clustered_corpus(std::size_t families, std::size_t per_family, std::uint64_t seed);

/// [a,x,y,b,end] vs [c,x,y,d,end]: the step after y needs three calls of
/// history.
Corpus order3_corpus(std::size_t per_family, std::uint64_t seed);

/// Linear plans over the TinyAgent tools (17 with join), single acceptable
/// tool at every step.
Corpus tinyagent_chain_corpus(std::size_t plans, std::uint64_t seed);

}  // namespace dtdr::testing
