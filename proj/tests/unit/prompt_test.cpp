#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "dtdr/corpus.hpp"
#include "dtdr/errors.hpp"
#include "dtdr/prompt.hpp"
#include "dtdr/text.hpp"
#include "fixtures.hpp"

namespace dtdr {
namespace {

#include "prompt_golden.inc"

const std::string kRecipeQuery =
    "Create a new note titled \"Recipe Ideas\" in the \"Cooking\" folder with a list of "
    "ingredients for a lasagna recipe. Then, append the steps for preparation to the same note. "
    "Finally, send an SMS to yourself with a reminder to buy the ingredients for the lasagna.";

FunctionCall recipe_note() {
  return {0, "create_note",
          {{"name", Literal{"Recipe Ideas"}},
           {"content",
            Literal{"Lasagna Ingredients: - Ground beef - Lasagna noodles - Ricotta cheese - "
                    "Mozzarella cheese - Parmesan cheese - Tomato sauce - Garlic - Onion - Olive "
                    "oil - Salt - Pepper - Italian seasoning"}},
           {"folder", Literal{"Cooking"}}}};
}

std::size_t occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

struct RecipeFixture : ::testing::Test {
  ToolCatalog catalog = tinyagent_builtin_catalog();
  PromptTemplates templates = PromptTemplates::defaults();
  std::vector<FunctionCall> executed = {recipe_note()};
  RetrievalResult retrieved = RetrievalResult::from_weights(
      catalog, std::vector<std::pair<ToolName, double>>{{"append_note_content", 5.0}, {"end", 2.0}});
  std::vector<ToolName> key = {"start", "create_note"};

  SelectionInput input() const {
    SelectionInput in;
    in.catalog = &catalog;
    in.query = kRecipeQuery;
    in.executed = executed;
    in.retrieved = &retrieved;
    in.history_key = key;
    return in;
  }
};

TEST_F(RecipeFixture, ExecutedCallRendering) {
  EXPECT_EQ(render_call(recipe_note(), catalog), kCreateNoteCall);
  EXPECT_EQ(render_executed_plan({}, catalog), " None");
}

TEST_F(RecipeFixture, NoIclListsTheWholeCatalog) {
  const auto p = build_selection_prompt(input(), parse_icl_strategy("no_icl"), templates);
  EXPECT_NE(p.constant_text.find("Set of available functions and their descriptions:\n" +
                                 std::string(kFullToolList) +
                                 "\nYou will choose one of the function names above."),
            std::string::npos);
  EXPECT_NE(p.variable_text.find("Executed plan so far:\n" + std::string(kCreateNoteCall)),
            std::string::npos);
  EXPECT_NE(p.variable_text.find("User query: " + python_str(kRecipeQuery) + "."), std::string::npos);
}

TEST_F(RecipeFixture, HardMaskListsOnlyRetrievedTools) {
  const auto p = build_selection_prompt(input(), parse_icl_strategy("hard_mask"), templates);
  EXPECT_NE(p.variable_text.find("Set of available functions and their descriptions:\n" +
                                 std::string(kMaskedToolList) + "\n"),
            std::string::npos);
  EXPECT_EQ(p.text().find("create_calendar_event"), std::string::npos);
}

TEST_F(RecipeFixture, WeightedHardMaskShowsRoundedProbabilities) {
  const auto p = build_selection_prompt(input(), parse_icl_strategy("hard_mask_weighted"), templates);
  EXPECT_NE(p.variable_text.find(
                "Set of available functions, their descriptions, and the percentage of times they "
                "appear in the ground truth sequences of training queries right after this current "
                "function call history:\n" +
                std::string(kWeightedToolList)),
            std::string::npos);
}

TEST_F(RecipeFixture, SoftMaskGuidance) {
  const auto p = build_selection_prompt(input(), parse_icl_strategy("soft_mask"), templates);
  EXPECT_NE(p.variable_text.find(
                "latest function call history of \"('start', 'create_note')\" in the training "
                "queries. The list is below:\n['append_note_content', 'join']\nPlease use this to "
                "guide your decision-making on function selection."),
            std::string::npos);
  for (const auto& t : catalog.tools()) {
    const auto name = "{'function': " + python_str(catalog.display_name(t.name)) + ",";
    EXPECT_EQ(occurrences(p.constant_text, name), 1u) << t.name;
  }
  const auto w = build_selection_prompt(input(), parse_icl_strategy("soft_mask_weighted"), templates);
  EXPECT_NE(w.variable_text.find("[{'function': 'append_note_content', 'probability': 0.714}, "
                                 "{'function': 'join', 'probability': 0.286}]"),
            std::string::npos);
}

TEST_F(RecipeFixture, MasksNeedARetrieval) {
  auto in = input();
  in.retrieved = nullptr;
  EXPECT_THROW(build_selection_prompt(in, parse_icl_strategy("hard_mask"), templates),
               MissingRetrieval);
  EXPECT_THROW(build_selection_prompt(in, parse_icl_strategy("soft_mask_weighted"), templates),
               MissingRetrieval);
  EXPECT_NO_THROW(build_selection_prompt(in, parse_icl_strategy("no_icl"), templates));
}

TEST_F(RecipeFixture, WorkedExampleIsConstant) {
  const auto pool = testing::tinyagent_chain_corpus(20, 3);
  const auto ex = pick_worked_example(pool.demos, 5006);
  ASSERT_TRUE(ex);
  auto in = input();
  in.example = &*ex;
  const auto with = build_selection_prompt(in, parse_icl_strategy("hard_mask"), templates);
  const auto without = build_selection_prompt(input(), parse_icl_strategy("hard_mask"), templates);
  EXPECT_EQ(with.variable_text, without.variable_text);
  EXPECT_GT(with.constant_text.size(), without.constant_text.size());
  EXPECT_NE(with.constant_text.find(python_str(ex->query)), std::string::npos);
  EXPECT_EQ(pick_worked_example(pool.demos, 5006)->query, ex->query);
  EXPECT_FALSE(pick_worked_example({}, 1));
}

TEST_F(RecipeFixture, HardMaskShrinksWithSupport) {
  std::vector<ToolName> names = catalog.names();
  std::size_t previous = std::numeric_limits<std::size_t>::max();
  const auto no_icl = build_selection_prompt(input(), parse_icl_strategy("no_icl"), templates);
  while (!names.empty()) {
    std::vector<std::pair<ToolName, double>> w;
    for (const auto& n : names) w.emplace_back(n, 1.0);
    retrieved = RetrievalResult::from_weights(catalog, w);
    const auto p = build_selection_prompt(input(), parse_icl_strategy("hard_mask"), templates);
    EXPECT_LE(p.total_chars(), previous);
    if (names.size() < catalog.size()) {
      EXPECT_LT(p.total_chars(), no_icl.total_chars());
    }
    previous = p.total_chars();
    names.pop_back();
  }
}

TEST_F(RecipeFixture, RawDemosUseRetrievedTools) {
  Corpus pool = testing::tinyagent_chain_corpus(60, 8);
  auto strategy = parse_icl_strategy("raw_demos");
  retrieved = RetrievalResult::from_weights(
      catalog, std::vector<std::pair<ToolName, double>>{{"summarize_pdf", 1.0}});
  auto in = input();
  in.demo_pool = pool.demos;
  in.demo_seed = 3;
  const auto p = build_selection_prompt(in, strategy, templates);
  const auto shown = occurrences(p.variable_text, "User query: 'task ");
  std::size_t eligible = 0;
  for (const auto& d : pool.demos) {
    for (const auto& c : d.plan.calls()) {
      if (c.tool == "summarize_pdf") {
        ++eligible;
        break;
      }
    }
  }
  EXPECT_EQ(shown, std::min<std::size_t>(5, eligible));
  EXPECT_EQ(occurrences(p.variable_text, "Plan:\n"), shown);
}

TEST(Thousandths, RoundingSumsToOne) {
  const std::vector<double> p = {5.0 / 7, 2.0 / 7};
  EXPECT_EQ(round_to_thousandths(p), (std::vector<int>{714, 286}));
  const std::vector<double> thirds = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  const auto r = round_to_thousandths(thirds);
  EXPECT_EQ(r[0] + r[1] + r[2], 1000);
  EXPECT_EQ(format_thousandths(714), "0.714");
  EXPECT_EQ(format_thousandths(500), "0.5");
  EXPECT_EQ(format_thousandths(1000), "1.0");
  EXPECT_EQ(format_thousandths(50), "0.05");
}

TEST(Paramfill, SignatureAndExampleAnswer) {
  const auto catalog = tinyagent_builtin_catalog();
  const auto& spec = catalog.get("append_note_content");
  EXPECT_EQ(render_signature(spec),
            "[name: 'name', type: 'str', is_optional: 'False', description: ''], [name: "
            "'append_content', type: 'str', is_optional: 'False', description: ''], [name: "
            "'folder', type: 'str', is_optional: 'True', description: '']");
  const Arguments args = {{"name", Literal{"Vacation Plans"}},
                          {"append_content", OutputRef{2}},
                          {"folder", Literal{"Travel"}}};
  const std::string answer = "name=Vacation Plans, append_content=out_3, folder=Travel";
  EXPECT_EQ(render_arguments(args, spec), answer);
  EXPECT_EQ(parse_paramfill_output(answer, spec), args);
  const Arguments no_folder = {{"name", Literal{"Vacation Plans"}}, {"append_content", OutputRef{2}}};
  EXPECT_EQ(parse_paramfill_output("name=Vacation Plans, append_content=out_3", spec), no_folder);
  EXPECT_THROW(parse_paramfill_output("bogus_param=x", spec), UnparseableArgs);
  EXPECT_THROW(parse_paramfill_output("name=a, name=b", spec), UnparseableArgs);
  EXPECT_THROW(parse_paramfill_output("name", spec), UnparseableArgs);
  EXPECT_THROW(parse_paramfill_output("name='open", spec), UnparseableArgs);
  EXPECT_EQ(parse_paramfill_output("name='out_3'", spec), (Arguments{{"name", Literal{"out_3"}}}));
}

TEST(Paramfill, PromptEnumeratesExecutedCalls) {
  const auto catalog = tinyagent_builtin_catalog();
  const std::vector<FunctionCall> executed = {
      {0, "maps_open_location", {{"query", Literal{"The Peninsula, New York"}}}},
      {1, "open_and_get_file_path", {{"name_or_path", Literal{"TravelGuide.pdf"}}}},
      {2, "summarize_pdf", {{"pdf_path", OutputRef{1}}}}};
  ParamFillInput in;
  in.catalog = &catalog;
  in.query = "Append the guide summary to my vacation note";
  in.executed = executed;
  in.target = "append_note_content";
  const auto p = build_paramfill_prompt(in, PromptTemplates::defaults());
  EXPECT_NE(p.variable_text.find("out_1 = maps_open_location(query='The Peninsula, New York')\n"
                                 "out_2 = open_and_get_file_path(name_or_path='TravelGuide.pdf')\n"
                                 "out_3 = summarize_pdf(pdf_path='out_2')\n"),
            std::string::npos);
  EXPECT_NE(p.variable_text.find("You will be using the function 'append_note_content' to solve "
                                 "this query. What this function does is 'Appends content to an "
                                 "existing note'."),
            std::string::npos);
  // Without a same-tool demo the generic example is used.
  EXPECT_NE(p.constant_text.find("recipients=['555-0100'], message=out_1"), std::string::npos);

  in.target = "zzz";
  EXPECT_THROW(build_paramfill_prompt(in, PromptTemplates::defaults()), UnknownTool);
}

TEST(Paramfill, SameToolExampleWhenAvailable) {
  const auto catalog = tinyagent_builtin_catalog();
  Demonstration demo{"Summarize my report",
                     Plan({{0, "open_and_get_file_path", {{"name_or_path", Literal{"report.pdf"}}}},
                           {1, "summarize_pdf", {{"pdf_path", OutputRef{0}}}},
                           {2, "end", {}}})};
  const std::vector<Demonstration> pool = {demo};
  ParamFillInput in;
  in.catalog = &catalog;
  in.query = "Summarize the thesis";
  in.target = "summarize_pdf";
  in.demo_pool = pool;
  const auto p = build_paramfill_prompt(in, PromptTemplates::defaults());
  EXPECT_NE(p.constant_text.find("User query: 'Summarize my report'."), std::string::npos);
  EXPECT_NE(p.constant_text.find("\n\npdf_path=out_1"), std::string::npos);
  EXPECT_EQ(p.constant_text.find("555-0100"), std::string::npos);
}

TEST(Paramfill, RenderParseRoundTripOnCorpora) {
  const auto catalog = testing::synthetic_catalog(9);
  const auto corpus = testing::random_corpus(catalog, 200, 6, 12);
  for (const auto& d : corpus.demos) {
    for (const auto& c : d.plan.calls()) {
      const auto& spec = catalog.get(c.tool);
      EXPECT_EQ(parse_paramfill_output(render_arguments(c.arguments, spec), spec), c.arguments);
    }
  }
  // Literals needing quotes survive too.
  ToolSpec spec{"t", "", {{"a", "str", false, ""}, {"b", "str", true, ""}}};
  const Arguments tricky = {{"a", Literal{"x, y"}}, {"b", Literal{"it's \"quoted\""}}};
  EXPECT_EQ(parse_paramfill_output(render_arguments(tricky, spec), spec), tricky);
  const Arguments ref_like = {{"a", Literal{"out_2"}}, {"b", Literal{" padded "}}};
  EXPECT_EQ(parse_paramfill_output(render_arguments(ref_like, spec), spec), ref_like);
}

TEST(SelectionParse, Normalization) {
  const auto catalog = tinyagent_builtin_catalog();
  EXPECT_EQ(parse_selection_output(" create_reminder\n", catalog), "create_reminder");
  EXPECT_EQ(parse_selection_output("`join`", catalog), "end");
  EXPECT_EQ(parse_selection_output("'Create_Note'.", catalog), "create_note");
  EXPECT_EQ(parse_selection_output("send_sms()", catalog), "send_sms");
  EXPECT_THROW(parse_selection_output("I think create_note", catalog), UnparseableSelection);
  EXPECT_THROW(parse_selection_output("", catalog), UnparseableSelection);
}

TEST(IclStrategy, Tags) {
  for (const char* tag :
       {"no_icl", "raw_demos", "hard_mask", "hard_mask_weighted", "soft_mask", "soft_mask_weighted"}) {
    EXPECT_EQ(to_string(parse_icl_strategy(tag)), tag);
  }
  EXPECT_THROW(parse_icl_strategy("raw_demos_weighted"), std::invalid_argument);
  EXPECT_THROW(parse_icl_strategy("mask"), std::invalid_argument);
}

TEST(Templates, RenderingAndOverrides) {
  const auto t = PromptTemplates::defaults();
  EXPECT_THROW(t.raw("nope"), TemplateError);
  EXPECT_THROW(t.render("selection_task", {{"query", "q"}}), TemplateError);
  EXPECT_EQ(t.render("paramfill_test", {{"task", "X"}}), "Test query:\nX");

  const auto dir = std::filesystem::temp_directory_path() / "dtdr_templates_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "paramfill_test.txt") << "T: {{task}}";
  const auto o = PromptTemplates::with_overrides(dir);
  EXPECT_EQ(o.render("paramfill_test", {{"task", "X"}}), "T: X");
  EXPECT_EQ(o.raw("selection_task"), t.raw("selection_task"));
  std::filesystem::remove_all(dir);
  EXPECT_THROW(PromptTemplates::with_overrides(dir), TemplateError);
}

TEST(PromptParts, TokenEstimate) {
  PromptParts p{"a b  c\n", "d\te"};
  EXPECT_EQ(p.constant_tokens(), 3u);
  EXPECT_EQ(p.variable_tokens(), 2u);
  EXPECT_EQ(p.total_chars(), 10u);
}

}  // namespace
}  // namespace dtdr
