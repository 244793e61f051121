#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/model.hpp"

namespace dtdr {

struct Corpus {
  std::string name;
  ToolCatalog catalog;
  std::vector<Demonstration> demos;

  std::size_t size() const noexcept { return demos.size(); }
  bool empty() const noexcept { return demos.empty(); }
  /// Copy with the same catalog and a subset of demonstrations.
  Corpus subset(std::span<const std::size_t> indices) const;
};

enum class CorpusFormat { canonical, tinyagent, taskbench };

CorpusFormat parse_corpus_format(std::string_view tag);
std::string_view to_string(CorpusFormat format);

/// Loads a corpus directory.
///
///  - canonical: `catalog.json` + `demos.jsonl`
///  - tinyagent: `data.json` (query-id -> {input, output}) with LLMCompiler
///    plan text; `catalog.json` is optional and defaults to the built-in
///    TinyAgent tool set
///  - taskbench: `tool_desc.json` + `data.json` (JSON lines)
///
/// Throws SchemaError (with file:line locus) or UnknownTool.
Corpus load_corpus(const std::filesystem::path& dir, CorpusFormat format);

/// Writes `catalog.json` and `demos.jsonl` in the canonical schema.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

ToolCatalog parse_catalog_json(std::string_view text,
                               std::string_view locus = "catalog.json");
std::string catalog_to_json(const ToolCatalog& catalog);

/// One canonical JSONL line <-> Demonstration.
Demonstration parse_demo_line(std::string_view line, const ToolCatalog& catalog,
                              std::string_view locus = {});
std::string demo_to_json_line(const Demonstration& demo);

/// The 16 TinyAgent tools plus the "join" terminal (stored as "end").
ToolCatalog tinyagent_builtin_catalog();

/// Parses one LLMCompiler-style plan ("1. tool(arg, ...)\n...join()").
/// Positional arguments bind to the catalog's parameter order; `$k` and
/// `out_k` become references to 1-based call k.
Plan parse_llmcompiler_plan(std::string_view text, const ToolCatalog& catalog,
                            std::string_view locus = {});

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 5006;
};

struct SplitResult {
  Corpus train;
  Corpus test;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  /// One message per tool with a single occurrence (forced into train).
  std::vector<std::string> warnings;
};

/// Greedy per-tool stratified split; plans are never divided.
SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec);

struct CorpusStats {
  std::size_t plans = 0;
  std::size_t tools = 0;  // excluding the terminal
  double calls_mean = 0.0;
  double calls_sd = 0.0;
  double deps_mean = 0.0;
  double deps_sd = 0.0;
};

CorpusStats corpus_stats(const Corpus& corpus);

}  // namespace dtdr
