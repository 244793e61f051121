#include "dtdr/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/rng.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

std::size_t PromptParts::constant_tokens() const noexcept {
  return whitespace_token_count(constant_text);
}

std::size_t PromptParts::variable_tokens() const noexcept {
  return whitespace_token_count(variable_text);
}

IclStrategy parse_icl_strategy(std::string_view tag) {
  IclStrategy s;
  std::string t = to_lower(trim(tag));
  if (t.size() > 9 && t.ends_with("_weighted")) {
    s.weighted = true;
    t.resize(t.size() - 9);
  }
  if (t == "no_icl") {
    s.kind = IclKind::no_icl;
  } else if (t == "raw_demos") {
    s.kind = IclKind::raw_demos;
  } else if (t == "hard_mask") {
    s.kind = IclKind::hard_mask;
  } else if (t == "soft_mask") {
    s.kind = IclKind::soft_mask;
  } else {
    throw std::invalid_argument("unknown ICL strategy '" + std::string(tag) + "'");
  }
  if (s.weighted && !s.needs_retrieval()) {
    throw std::invalid_argument("only the mask strategies have weighted variants");
  }
  return s;
}

std::string to_string(const IclStrategy& strategy) {
  std::string out;
  switch (strategy.kind) {
    case IclKind::no_icl:
      out = "no_icl";
      break;
    case IclKind::raw_demos:
      out = "raw_demos";
      break;
    case IclKind::hard_mask:
      out = "hard_mask";
      break;
    case IclKind::soft_mask:
      out = "soft_mask";
      break;
  }
  if (strategy.weighted) out += "_weighted";
  return out;
}

// -- templates ------------------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  for (const auto& [name, text] : detail::embedded_templates()) t.templates_.emplace(name, text);
  return t;
}

PromptTemplates PromptTemplates::with_overrides(const std::filesystem::path& dir) {
  PromptTemplates t = defaults();
  if (!std::filesystem::is_directory(dir)) {
    throw TemplateError("template directory " + dir.string() + " does not exist");
  }
  for (auto& [name, text] : t.templates_) {
    const auto file = dir / (name + ".txt");
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return t;
}

const std::string& PromptTemplates::raw(std::string_view name) const {
  const auto it = templates_.find(name);
  if (it == templates_.end()) throw TemplateError("no template named '" + std::string(name) + "'");
  return it->second;
}

std::string PromptTemplates::render(std::string_view name,
                                    const std::map<std::string, std::string>& vars) const {
  const std::string& text = raw(name);
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (true) {
    const auto open = text.find("{{", pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string::npos) {
      throw TemplateError("template '" + std::string(name) + "' has an unterminated placeholder");
    }
    out.append(text, pos, open - pos);
    const std::string key = text.substr(open + 2, close - open - 2);
    const auto it = vars.find(key);
    if (it == vars.end()) {
      throw TemplateError("template '" + std::string(name) + "' uses unbound {{" + key + "}}");
    }
    out += it->second;
    pos = close + 2;
  }
  return out;
}

std::vector<std::string> PromptTemplates::names() const {
  std::vector<std::string> out;
  for (const auto& [name, text] : templates_) out.push_back(name);
  return out;
}

// -- rendering helpers ----------------------------------------------------------

std::string python_str(std::string_view s) {
  const bool has_single = s.find('\'') != std::string_view::npos;
  const bool has_double = s.find('"') != std::string_view::npos;
  const char q = (has_single && !has_double) ? '"' : '\'';
  std::string out(1, q);
  for (char c : s) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        if (c == q) out += '\\';
        out += c;
    }
  }
  out += q;
  return out;
}

std::string python_tuple(std::span<const std::string> items) {
  std::string out = "(";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += python_str(items[i]);
  }
  if (items.size() == 1) out += ",";
  out += ")";
  return out;
}

namespace {

std::string python_list(std::span<const std::string> items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += python_str(items[i]);
  }
  out += "]";
  return out;
}

// Argument names in signature order, then any others alphabetically.
std::vector<std::string> argument_order(const Arguments& args, const ToolSpec* spec) {
  std::vector<std::string> order;
  if (spec) {
    for (const auto& p : spec->parameters) {
      if (args.count(p.name)) order.push_back(p.name);
    }
  }
  for (const auto& [name, v] : args) {
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  }
  return order;
}

// Splits on commas outside quotes and brackets. Returns nullopt when quotes
// or brackets do not balance.
std::optional<std::vector<std::string>> split_top_level(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  char quote = 0;
  bool escape = false;
  for (char c : text) {
    if (quote) {
      cur += c;
      if (escape) {
        escape = false;
      } else if (c == '\\') {
        escape = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '\'' || c == '"') {
      quote = c;
    } else if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']' || c == '}') {
      if (--depth < 0) return std::nullopt;
    } else if (c == ',' && depth == 0) {
      parts.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (quote || depth != 0) return std::nullopt;
  parts.push_back(std::move(cur));
  return parts;
}

bool is_out_ref(std::string_view v, std::size_t* index = nullptr) {
  if (v.size() < 5 || v.substr(0, 4) != "out_") return false;
  std::size_t k = 0;
  for (char c : v.substr(4)) {
    if (c < '0' || c > '9') return false;
    k = k * 10 + static_cast<std::size_t>(c - '0');
    if (k > 1'000'000) return false;
  }
  if (index) *index = k;
  return true;
}

bool needs_quotes(std::string_view v) {
  if (v.empty() || trim(v) != v) return true;
  if (v.front() == '\'' || v.front() == '"') return true;
  if (is_out_ref(v)) return true;
  const auto parts = split_top_level(v);
  return !parts || parts->size() != 1;
}

std::optional<std::string> unquote(std::string_view v) {
  if (v.size() < 2) return std::nullopt;
  const char q = v.front();
  if ((q != '\'' && q != '"') || v.back() != q) return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    char c = v[i];
    if (c == '\\' && i + 2 < v.size()) {
      const char n = v[++i];
      switch (n) {
        case 'n':
          out += '\n';
          break;
        case 't':
          out += '\t';
          break;
        case 'r':
          out += '\r';
          break;
        default:
          out += n;
      }
      continue;
    }
    if (c == q) return std::nullopt;  // unescaped quote inside
    out += c;
  }
  return out;
}

}  // namespace

std::string render_tool_list(const ToolCatalog& catalog, std::span<const ToolName> names,
                             std::span<const double> probabilities) {
  if (!probabilities.empty() && probabilities.size() != names.size()) {
    throw std::invalid_argument("one probability per listed tool expected");
  }
  const auto rounded = round_to_thousandths(probabilities);
  std::string out = "[";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& spec = catalog.get(names[i]);
    if (i) out += ", ";
    out += "{'function': " + python_str(catalog.display_name(spec.name)) +
           ", 'description': " + python_str(spec.description);
    if (!probabilities.empty()) out += ", 'probability': " + format_thousandths(rounded[i]);
    out += "}";
  }
  out += "]";
  return out;
}

std::string render_call(const FunctionCall& call, const ToolCatalog& catalog) {
  const ToolSpec* spec = catalog.contains(call.tool) ? &catalog.get(call.tool) : nullptr;
  std::string out = OutputRef{call.step}.label() + " = " + catalog.display_name(call.tool) + "(";
  bool first = true;
  for (const auto& name : argument_order(call.arguments, spec)) {
    if (!first) out += ", ";
    first = false;
    const auto& v = call.arguments.at(name);
    out += name + "=";
    if (const auto* lit = std::get_if<Literal>(&v)) {
      out += python_str(lit->value);
    } else {
      out += python_str(std::get<OutputRef>(v).label());
    }
  }
  out += ")";
  return out;
}

std::string render_executed_plan(std::span<const FunctionCall> calls, const ToolCatalog& catalog) {
  if (calls.empty()) return " None";
  std::string out;
  for (const auto& c : calls) out += "\n" + render_call(c, catalog);
  return out;
}

std::string render_arguments(const Arguments& args, const ToolSpec& signature) {
  std::string out;
  for (const auto& name : argument_order(args, &signature)) {
    if (!out.empty()) out += ", ";
    const auto& v = args.at(name);
    out += name + "=";
    if (const auto* lit = std::get_if<Literal>(&v)) {
      out += needs_quotes(lit->value) ? python_str(lit->value) : lit->value;
    } else {
      out += std::get<OutputRef>(v).label();
    }
  }
  return out;
}

std::string render_signature(const ToolSpec& tool) {
  std::string out;
  for (std::size_t i = 0; i < tool.parameters.size(); ++i) {
    const auto& p = tool.parameters[i];
    if (i) out += ", ";
    out += "[name: " + python_str(p.name) + ", type: " + python_str(p.type) +
           ", is_optional: '" + (p.optional ? "True" : "False") +
           "', description: " + python_str(p.description) + "]";
  }
  return out;
}

std::vector<int> round_to_thousandths(std::span<const double> probabilities) {
  std::vector<int> out(probabilities.size(), 0);
  if (probabilities.empty()) return out;
  double sum = 0.0;
  for (double p : probabilities) sum += p;
  if (!(sum > 0.0)) throw std::invalid_argument("probabilities must have a positive sum");
  std::vector<double> frac(probabilities.size());
  int assigned = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const double scaled = probabilities[i] / sum * 1000.0;
    out[i] = static_cast<int>(std::floor(scaled));
    frac[i] = scaled - out[i];
    assigned += out[i];
  }
  std::vector<std::size_t> idx(probabilities.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < 1000; ++i, ++assigned) ++out[idx[i % idx.size()]];
  return out;
}

std::string format_thousandths(int value) {
  std::string out = std::to_string(value / 1000) + ".";
  std::string frac = std::to_string(value % 1000);
  frac.insert(0, 3 - frac.size(), '0');
  while (frac.size() > 1 && frac.back() == '0') frac.pop_back();
  return out + frac;
}

// -- selection ------------------------------------------------------------------

std::optional<WorkedExample> pick_worked_example(std::span<const Demonstration> pool,
                                                 std::uint64_t seed) {
  if (pool.empty()) return std::nullopt;
  Rng rng(mix64(seed ^ 0xe8a3b1e5ULL));
  const auto& demo = pool[rng.below(pool.size())];
  const std::size_t step = rng.below(demo.plan.size());
  WorkedExample ex;
  ex.query = demo.query;
  ex.executed.assign(demo.plan.calls().begin(),
                     demo.plan.calls().begin() + static_cast<std::ptrdiff_t>(step));
  ex.answer = demo.plan.calls()[step].tool;
  return ex;
}

namespace {

std::vector<const Demonstration*> pick_raw_demos(const SelectionInput& in, std::size_t max_demos) {
  std::vector<const Demonstration*> eligible;
  for (const auto& d : in.demo_pool) {
    if (d.query == in.query) continue;
    bool uses = in.retrieved == nullptr;
    if (!uses) {
      for (const auto& c : d.plan.calls()) {
        if (c.tool != kEndTool && in.retrieved->contains(c.tool)) {
          uses = true;
          break;
        }
      }
    }
    if (uses) eligible.push_back(&d);
  }
  Rng rng(mix64(in.demo_seed ^ fnv1a(in.query)));
  const std::size_t n = std::min(max_demos, eligible.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(eligible[i], eligible[i + rng.below(eligible.size() - i)]);
  }
  eligible.resize(n);
  return eligible;
}

}  // namespace

PromptParts build_selection_prompt(const SelectionInput& in, const IclStrategy& strategy,
                                   const PromptTemplates& templates) {
  if (!in.catalog) throw std::invalid_argument("selection prompt needs a catalog");
  const ToolCatalog& catalog = *in.catalog;
  if (strategy.needs_retrieval() && in.retrieved == nullptr) {
    throw MissingRetrieval(to_string(strategy) + " needs a retrieval result");
  }
  const auto all = catalog.names();
  const std::string full_list =
      templates.render("selection_functions", {{"tools", render_tool_list(catalog, all)}});

  PromptParts parts;
  parts.constant_text = templates.render("selection_system", {}) + "\n\n";
  if (in.example) {
    parts.constant_text +=
        templates.render("selection_example",
                         {{"functions", full_list},
                          {"query", python_str(in.example->query)},
                          {"plan", render_executed_plan(in.example->executed, catalog)},
                          {"answer", catalog.display_name(in.example->answer)}}) +
        "\n\n";
  }
  const std::string task =
      templates.render("selection_task", {{"query", python_str(in.query)},
                                          {"plan", render_executed_plan(in.executed, catalog)}});

  switch (strategy.kind) {
    case IclKind::no_icl:
      parts.constant_text += full_list + "\n\n";
      parts.variable_text = task;
      break;
    case IclKind::raw_demos: {
      parts.constant_text += full_list + "\n\n";
      const auto demos = pick_raw_demos(in, strategy.max_demos);
      if (!demos.empty()) {
        std::string body;
        for (const auto* d : demos) {
          if (!body.empty()) body += "\n\n";
          body += templates.render(
              "raw_demo_item", {{"query", python_str(d->query)},
                                {"plan", render_executed_plan(d->plan.calls(), catalog)}});
        }
        parts.variable_text = templates.render("raw_demos", {{"demos", body}}) + "\n\n";
      }
      parts.variable_text += task;
      break;
    }
    case IclKind::soft_mask: {
      parts.constant_text += full_list + "\n\n";
      std::string listed;
      if (strategy.weighted) {
        std::vector<double> p;
        for (const auto& s : in.retrieved->ranking()) p.push_back(s.probability);
        const auto rounded = round_to_thousandths(p);
        listed = "[";
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (i) listed += ", ";
          listed += "{'function': " +
                    python_str(catalog.display_name(in.retrieved->ranking()[i].name)) +
                    ", 'probability': " + format_thousandths(rounded[i]) + "}";
        }
        listed += "]";
      } else {
        std::vector<std::string> names;
        for (const auto& s : in.retrieved->ranking()) names.push_back(catalog.display_name(s.name));
        listed = python_list(names);
      }
      std::vector<std::string> key;
      for (const auto& k : in.history_key) key.push_back(catalog.display_name(k));
      parts.variable_text =
          templates.render(strategy.weighted ? "soft_guidance_weighted" : "soft_guidance",
                           {{"history", python_tuple(key)}, {"tools", listed}}) +
          "\n\n" + task;
      break;
    }
    case IclKind::hard_mask: {
      std::vector<ToolName> names;
      std::vector<double> p;
      for (const auto& s : in.retrieved->ranking()) {
        names.push_back(s.name);
        p.push_back(s.probability);
      }
      const std::string list =
          strategy.weighted ? render_tool_list(catalog, names, p) : render_tool_list(catalog, names);
      parts.variable_text =
          templates.render(strategy.weighted ? "selection_functions_weighted" : "selection_functions",
                           {{"tools", list}}) +
          "\n\n" + task;
      break;
    }
  }
  return parts;
}

// -- parameter filling ------------------------------------------------------------

PromptParts build_paramfill_prompt(const ParamFillInput& in, const PromptTemplates& templates) {
  if (!in.catalog) throw std::invalid_argument("parameter prompt needs a catalog");
  const ToolCatalog& catalog = *in.catalog;
  const ToolSpec& target = catalog.get(in.target);

  auto task_for = [&](std::string_view query, std::span<const FunctionCall> executed) {
    return templates.render("paramfill_task",
                            {{"query", python_str(query)},
                             {"plan", render_executed_plan(executed, catalog)},
                             {"function", catalog.display_name(target.name)},
                             {"description", target.description},
                             {"signature", render_signature(target)}});
  };

  std::vector<std::pair<const Demonstration*, std::size_t>> candidates;
  for (const auto& d : in.demo_pool) {
    if (d.query == in.query) continue;
    for (const auto& c : d.plan.calls()) {
      if (c.tool == target.name) {
        candidates.emplace_back(&d, c.step);
        break;
      }
    }
  }

  PromptParts parts;
  parts.constant_text = templates.render("paramfill_system", {}) + "\n\n";
  if (candidates.empty()) {
    parts.constant_text += templates.render("paramfill_generic_example", {}) + "\n\n";
  } else {
    Rng rng(mix64(in.seed ^ fnv1a(target.name)));
    const auto [demo, step] = candidates[rng.below(candidates.size())];
    const auto& calls = demo->plan.calls();
    const std::string example_task = task_for(
        demo->query, std::span<const FunctionCall>(calls.data(), step));
    parts.constant_text +=
        templates.render("paramfill_example",
                         {{"task", example_task},
                          {"answer", render_arguments(calls[step].arguments, target)}}) +
        "\n\n";
  }
  parts.variable_text = templates.render("paramfill_test", {{"task", task_for(in.query, in.executed)}});
  return parts;
}

// -- parsing --------------------------------------------------------------------

ToolName parse_selection_output(std::string_view text, const ToolCatalog& catalog) {
  constexpr std::string_view kStrip = " \t\r\n'\"`*.,;:!?";
  std::string_view s = text;
  auto strip = [&] {
    while (!s.empty() && kStrip.find(s.front()) != std::string_view::npos) s.remove_prefix(1);
    while (!s.empty() && kStrip.find(s.back()) != std::string_view::npos) s.remove_suffix(1);
  };
  strip();
  if (s.ends_with("()")) {
    s.remove_suffix(2);
    strip();
  }
  const std::string wanted = to_lower(s);
  if (!wanted.empty()) {
    for (const auto& tool : catalog.tools()) {
      if (to_lower(tool.name) == wanted || to_lower(catalog.display_name(tool.name)) == wanted) {
        return tool.name;
      }
    }
  }
  std::string shown(text.substr(0, 80));
  throw UnparseableSelection("'" + shown + "' is not a tool name");
}

Arguments parse_paramfill_output(std::string_view text, const ToolSpec& signature) {
  Arguments out;
  const std::string_view body = trim(text);
  if (body.empty()) return out;
  const auto pieces = split_top_level(body);
  if (!pieces) throw UnparseableArgs("unbalanced quotes or brackets in '" + std::string(body) + "'");
  for (const auto& raw_piece : *pieces) {
    const std::string_view piece = trim(raw_piece);
    if (piece.empty()) continue;
    const auto eq = piece.find('=');
    if (eq == std::string_view::npos) {
      throw UnparseableArgs("expected name=value, got '" + std::string(piece) + "'");
    }
    const std::string name(trim(piece.substr(0, eq)));
    const std::string_view value = trim(piece.substr(eq + 1));
    if (!signature.find_param(name)) {
      throw UnparseableArgs("'" + name + "' is not a parameter of " + signature.name);
    }
    if (out.count(name)) throw UnparseableArgs("parameter '" + name + "' given twice");
    std::size_t k = 0;
    if (is_out_ref(value, &k)) {
      if (k == 0) throw UnparseableArgs("out_0 is not a valid reference");
      out.emplace(name, OutputRef{k - 1});
    } else if (auto unq = unquote(value)) {
      out.emplace(name, Literal{std::move(*unq)});
    } else {
      out.emplace(name, Literal{std::string(value)});
    }
  }
  return out;
}

}  // namespace dtdr
