#include "dtdr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <regex>
#include <sstream>

#include "dtdr/errors.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string locus_at(std::string_view file, std::size_t line,
                     std::string_view field = {}) {
  std::string out(file);
  if (line > 0) out += ":" + std::to_string(line);
  if (!field.empty()) {
    out += ": ";
    out += field;
  }
  return out;
}

json parse_json(std::string_view text, const std::string& locus) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(locus, std::string("invalid JSON: ") + e.what());
  }
}

const json& require(const json& obj, const char* key, const std::string& locus) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw SchemaError(locus, std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key,
                           const std::string& locus) {
  const auto& v = require(obj, key, locus);
  if (!v.is_string()) {
    throw SchemaError(locus + "." + key, "expected a string");
  }
  return v.get<std::string>();
}

std::string value_to_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

/// "out_3" / "$3" -> 0-based step 2. Returns nullopt for anything else.
std::optional<std::size_t> parse_ref_token(std::string_view token) {
  token = trim(token);
  if (token.size() >= 2 && (token.front() == '"' || token.front() == '\'') &&
      token.back() == token.front()) {
    token = trim(token.substr(1, token.size() - 2));
  }
  std::string_view digits;
  if (token.starts_with("out_")) {
    digits = token.substr(4);
  } else if (token.starts_with("$")) {
    digits = token.substr(1);
  } else {
    return std::nullopt;
  }
  if (digits.empty() ||
      !std::all_of(digits.begin(), digits.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  const std::size_t k = std::stoull(std::string(digits));
  if (k == 0) return std::nullopt;
  return k - 1;
}

Plan make_plan_checked(std::vector<FunctionCall> calls,
                       const std::string& locus) {
  try {
    return Plan(std::move(calls));
  } catch (const MalformedRef& e) {
    throw SchemaError(locus, e.what());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(locus, e.what());
  }
}

}  // namespace

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out{name, catalog, {}};
  out.demos.reserve(indices.size());
  for (std::size_t i : indices) out.demos.push_back(demos.at(i));
  return out;
}

CorpusFormat parse_corpus_format(std::string_view tag) {
  if (tag == "canonical") return CorpusFormat::canonical;
  if (tag == "tinyagent") return CorpusFormat::tinyagent;
  if (tag == "taskbench") return CorpusFormat::taskbench;
  throw std::invalid_argument("unknown corpus format: " + std::string(tag));
}

std::string_view to_string(CorpusFormat format) {
  switch (format) {
    case CorpusFormat::canonical: return "canonical";
    case CorpusFormat::tinyagent: return "tinyagent";
    case CorpusFormat::taskbench: return "taskbench";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Canonical schema
// ---------------------------------------------------------------------------

ToolCatalog parse_catalog_json(std::string_view text, std::string_view locus) {
  const std::string loc(locus);
  const json root = parse_json(text, loc);
  if (!root.is_array()) throw SchemaError(loc, "catalog must be a JSON array");
  std::vector<ToolSpec> tools;
  std::string alias;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& t = root[i];
    const std::string tl = loc + ": [" + std::to_string(i) + "]";
    ToolSpec spec;
    spec.name = require_string(t, "name", tl);
    if (t.contains("description")) spec.description = value_to_text(t["description"]);
    if (t.contains("parameters")) {
      const auto& ps = t["parameters"];
      if (!ps.is_array()) throw SchemaError(tl + ".parameters", "expected an array");
      for (std::size_t j = 0; j < ps.size(); ++j) {
        const std::string pl = tl + ".parameters[" + std::to_string(j) + "]";
        ParamSpec p;
        p.name = require_string(ps[j], "name", pl);
        if (ps[j].contains("type")) p.type = value_to_text(ps[j]["type"]);
        if (ps[j].contains("optional")) {
          if (!ps[j]["optional"].is_boolean()) {
            throw SchemaError(pl + ".optional", "expected a boolean");
          }
          p.optional = ps[j]["optional"].get<bool>();
        }
        if (ps[j].contains("description")) {
          p.description = value_to_text(ps[j]["description"]);
        }
        spec.parameters.push_back(std::move(p));
      }
    }
    if (spec.name == kEndTool && t.contains("native_name")) {
      alias = value_to_text(t["native_name"]);
    }
    tools.push_back(std::move(spec));
  }
  try {
    return ToolCatalog(std::move(tools), alias);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(loc, e.what());
  }
}

std::string catalog_to_json(const ToolCatalog& catalog) {
  json root = json::array();
  for (const auto& t : catalog.tools()) {
    json params = json::array();
    for (const auto& p : t.parameters) {
      params.push_back({{"name", p.name},
                        {"type", p.type},
                        {"optional", p.optional},
                        {"description", p.description}});
    }
    json entry = {{"name", t.name},
                  {"description", t.description},
                  {"parameters", std::move(params)}};
    if (t.name == kEndTool && !catalog.terminal_alias().empty()) {
      entry["native_name"] = catalog.terminal_alias();
    }
    root.push_back(std::move(entry));
  }
  return root.dump(2) + "\n";
}

Demonstration parse_demo_line(std::string_view line, const ToolCatalog& catalog,
                              std::string_view locus) {
  const std::string loc(locus);
  const json obj = parse_json(line, loc);
  Demonstration demo;
  demo.query = require_string(obj, "query", loc);
  if (trim(demo.query).empty()) throw SchemaError(loc + ": query", "query is empty");
  const auto& plan = require(obj, "plan", loc);
  if (!plan.is_array()) throw SchemaError(loc + ": plan", "expected an array");
  std::vector<FunctionCall> calls;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string cl = loc + ": plan[" + std::to_string(i) + "]";
    FunctionCall call;
    call.step = i;
    call.tool = catalog.canonical_name(require_string(plan[i], "tool", cl));
    const auto* spec = catalog.contains(call.tool) ? &catalog.get(call.tool) : nullptr;
    if (!spec) {
      throw UnknownTool(cl + ".tool: plan references unknown tool '" + call.tool + "'");
    }
    if (plan[i].contains("args")) {
      const auto& args = plan[i]["args"];
      if (!args.is_object()) throw SchemaError(cl + ".args", "expected an object");
      for (const auto& [param, value] : args.items()) {
        const std::string al = cl + ".args." + param;
        if (!spec->find_param(param)) {
          throw SchemaError(al, "tool '" + call.tool + "' has no parameter '" + param + "'");
        }
        if (value.is_object() && value.contains("lit")) {
          call.arguments[param] = Literal{value_to_text(value["lit"])};
        } else if (value.is_object() && value.contains("ref")) {
          if (!value["ref"].is_number_unsigned() && !value["ref"].is_number_integer()) {
            throw SchemaError(al, "ref must be an integer step index");
          }
          const auto step = value["ref"].get<long long>();
          if (step < 0) throw SchemaError(al, "ref must be non-negative");
          call.arguments[param] = OutputRef{static_cast<std::size_t>(step)};
        } else {
          throw SchemaError(al, "expected {\"lit\": string} or {\"ref\": int}");
        }
      }
    }
    calls.push_back(std::move(call));
  }
  demo.plan = make_plan_checked(std::move(calls), loc);
  return demo;
}

std::string demo_to_json_line(const Demonstration& demo) {
  json plan = json::array();
  for (const auto& call : demo.plan.calls()) {
    json args = json::object();
    for (const auto& [param, value] : call.arguments) {
      if (const auto* lit = std::get_if<Literal>(&value)) {
        args[param] = {{"lit", lit->value}};
      } else {
        args[param] = {{"ref", std::get<OutputRef>(value).step}};
      }
    }
    plan.push_back({{"tool", call.tool}, {"args", std::move(args)}});
  }
  json obj = {{"query", demo.query}, {"plan", std::move(plan)}};
  return obj.dump();
}

namespace {

Corpus load_canonical(const fs::path& dir) {
  Corpus corpus;
  corpus.name = dir.filename().string();
  const fs::path cat_path = dir / "catalog.json";
  corpus.catalog = parse_catalog_json(read_file(cat_path), cat_path.string());
  const fs::path demo_path = dir / "demos.jsonl";
  std::istringstream lines(read_file(demo_path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    corpus.demos.push_back(parse_demo_line(
        line, corpus.catalog, locus_at(demo_path.string(), lineno)));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// TinyAgent adapter
// ---------------------------------------------------------------------------

constexpr std::string_view kTinyAgentCatalog = R"JSON([
 {"name": "create_calendar_event", "description": "Create a calendar event", "parameters": [
   {"name": "title", "type": "str", "optional": false, "description": ""},
   {"name": "start_date", "type": "datetime", "optional": false, "description": ""},
   {"name": "end_date", "type": "datetime", "optional": false, "description": ""},
   {"name": "location", "type": "str", "optional": true, "description": ""},
   {"name": "invitees", "type": "list[str]", "optional": true, "description": ""},
   {"name": "notes", "type": "str", "optional": true, "description": ""},
   {"name": "calendar", "type": "str", "optional": true, "description": ""}]},
 {"name": "get_phone_number", "description": "Search for a contact by name. Returns the phone number of the contact.", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""}]},
 {"name": "get_email_address", "description": "Search for a contact by name. Returns the email address of the contact", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""}]},
 {"name": "compose_new_email", "description": "Composes a new email and returns the status of the email composition", "parameters": [
   {"name": "recipients", "type": "list[str]", "optional": false, "description": ""},
   {"name": "cc", "type": "list[str]", "optional": true, "description": ""},
   {"name": "subject", "type": "str", "optional": false, "description": ""},
   {"name": "context", "type": "str", "optional": false, "description": ""},
   {"name": "attachments", "type": "list[str]", "optional": true, "description": ""}]},
 {"name": "reply_to_email", "description": "Replies to the currently selected email in Mail with the given content", "parameters": [
   {"name": "cc", "type": "list[str]", "optional": true, "description": ""},
   {"name": "context", "type": "str", "optional": false, "description": ""},
   {"name": "attachments", "type": "list[str]", "optional": true, "description": ""}]},
 {"name": "forward_email", "description": "Forwards the currently selected email in Mail with the given content", "parameters": [
   {"name": "recipients", "type": "list[str]", "optional": false, "description": ""},
   {"name": "cc", "type": "list[str]", "optional": true, "description": ""},
   {"name": "context", "type": "str", "optional": false, "description": ""},
   {"name": "attachments", "type": "list[str]", "optional": true, "description": ""}]},
 {"name": "maps_open_location", "description": "Opens the specified location in Apple Maps", "parameters": [
   {"name": "query", "type": "str", "optional": false, "description": ""}]},
 {"name": "maps_show_directions", "description": "Show directions from a start location to an end location in Apple Maps", "parameters": [
   {"name": "start_location", "type": "str", "optional": true, "description": ""},
   {"name": "end_location", "type": "str", "optional": false, "description": ""},
   {"name": "transport", "type": "str", "optional": true, "description": ""}]},
 {"name": "create_note", "description": "Creates a new note with the given content", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""},
   {"name": "content", "type": "str", "optional": false, "description": ""},
   {"name": "folder", "type": "str", "optional": true, "description": ""}]},
 {"name": "open_note", "description": "Opens an existing note by its name", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""},
   {"name": "folder", "type": "str", "optional": true, "description": ""}]},
 {"name": "append_note_content", "description": "Appends content to an existing note", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""},
   {"name": "append_content", "type": "str", "optional": false, "description": ""},
   {"name": "folder", "type": "str", "optional": true, "description": ""}]},
 {"name": "create_reminder", "description": "Creates a new reminder and returns the status of the reminder creation", "parameters": [
   {"name": "name", "type": "str", "optional": false, "description": ""},
   {"name": "due_date", "type": "datetime", "optional": true, "description": ""},
   {"name": "notes", "type": "str", "optional": true, "description": ""},
   {"name": "list_name", "type": "str", "optional": true, "description": ""},
   {"name": "priority", "type": "int", "optional": true, "description": ""},
   {"name": "all_day", "type": "bool", "optional": true, "description": ""}]},
 {"name": "send_sms", "description": "Send an SMS to a list of phone numbers", "parameters": [
   {"name": "recipients", "type": "list[str]", "optional": false, "description": ""},
   {"name": "message", "type": "str", "optional": false, "description": ""}]},
 {"name": "open_and_get_file_path", "description": "Opens the file and returns its path", "parameters": [
   {"name": "name_or_path", "type": "str", "optional": false, "description": ""}]},
 {"name": "get_zoom_meeting_link", "description": "Creates a Zoom meeting and returns the join URL", "parameters": [
   {"name": "topic", "type": "str", "optional": false, "description": ""},
   {"name": "start_time", "type": "datetime", "optional": false, "description": ""},
   {"name": "duration", "type": "int", "optional": false, "description": ""},
   {"name": "meeting_invitees", "type": "list[str]", "optional": false, "description": ""}]},
 {"name": "summarize_pdf", "description": "Summarizes the content of a PDF file and returns the summary", "parameters": [
   {"name": "pdf_path", "type": "str", "optional": false, "description": ""}]},
 {"name": "end", "native_name": "join", "description": "Collects and combines results from prior actions. It should always be the last action in the plan", "parameters": []}
])JSON";

/// Splits `text` on commas that are not nested inside quotes, (), [] or {}.
std::vector<std::string> split_top_level(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  char quote = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      cur += c;
      if (c == '\\' && i + 1 < text.size()) {
        cur += text[++i];
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']' || c == '}') {
      --depth;
    } else if (c == ',' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
      continue;
    }
    cur += c;
  }
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(cur);
  return parts;
}

std::string unquote(std::string_view v) {
  v = trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return std::string(v.substr(1, v.size() - 2));
  }
  return std::string(v);
}

ArgValue parse_llmcompiler_value(std::string_view raw) {
  std::string_view v = trim(raw);
  if (auto ref = parse_ref_token(v)) return OutputRef{*ref};
  // A single-element list holding one reference, e.g. ["$1"].
  if (v.size() >= 2 && v.front() == '[' && v.back() == ']') {
    auto inner = split_top_level(v.substr(1, v.size() - 2));
    if (inner.size() == 1) {
      if (auto ref = parse_ref_token(inner.front())) return OutputRef{*ref};
    }
  }
  return Literal{unquote(v)};
}

Corpus load_tinyagent(const fs::path& dir) {
  Corpus corpus;
  corpus.name = dir.filename().string();
  const fs::path cat_path = dir / "catalog.json";
  corpus.catalog = fs::exists(cat_path)
                       ? parse_catalog_json(read_file(cat_path), cat_path.string())
                       : tinyagent_builtin_catalog();
  const fs::path data_path = dir / "data.json";
  const json root = parse_json(read_file(data_path), data_path.string());

  auto add_entry = [&](const std::string& id, const json& entry) {
    const std::string loc = data_path.string() + ": " + id;
    Demonstration demo;
    demo.query = require_string(entry, "input", loc);
    const json& out = require(entry, "output", loc);
    std::string plan_text;
    if (out.is_string()) {
      plan_text = out.get<std::string>();
    } else if (out.is_array()) {
      for (const auto& o : out) {
        if (o.is_object() && o.contains("raw_output") && o["raw_output"].is_string()) {
          plan_text = o["raw_output"].get<std::string>();
          break;
        }
        if (o.is_string()) {
          plan_text = o.get<std::string>();
          break;
        }
      }
    }
    if (plan_text.empty()) throw SchemaError(loc + ".output", "no plan text found");
    demo.plan = parse_llmcompiler_plan(plan_text, corpus.catalog, loc);
    corpus.demos.push_back(std::move(demo));
  };

  if (root.is_object()) {
    for (const auto& [id, entry] : root.items()) add_entry(id, entry);
  } else if (root.is_array()) {
    for (std::size_t i = 0; i < root.size(); ++i) add_entry("[" + std::to_string(i) + "]", root[i]);
  } else {
    throw SchemaError(data_path.string(), "expected an object or array of samples");
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// TaskBench adapter
// ---------------------------------------------------------------------------

Corpus load_taskbench(const fs::path& dir) {
  Corpus corpus;
  corpus.name = dir.filename().string();
  const fs::path desc_path = dir / "tool_desc.json";
  const json desc = parse_json(read_file(desc_path), desc_path.string());
  const json& nodes = require(desc, "nodes", desc_path.string());
  if (!nodes.is_array()) throw SchemaError(desc_path.string() + ": nodes", "expected an array");

  std::vector<ToolSpec> tools;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string loc = desc_path.string() + ": nodes[" + std::to_string(i) + "]";
    ToolSpec spec;
    spec.name = require_string(nodes[i], "id", loc);
    if (nodes[i].contains("desc")) spec.description = value_to_text(nodes[i]["desc"]);
    if (nodes[i].contains("parameters") && nodes[i]["parameters"].is_array()) {
      for (const auto& p : nodes[i]["parameters"]) {
        ParamSpec ps;
        ps.name = require_string(p, "name", loc + ".parameters");
        if (p.contains("type")) ps.type = value_to_text(p["type"]);
        if (p.contains("description")) ps.description = value_to_text(p["description"]);
        spec.parameters.push_back(std::move(ps));
      }
    } else if (nodes[i].contains("input-type") && nodes[i]["input-type"].is_array()) {
      std::map<std::string, int> seen;
      for (const auto& t : nodes[i]["input-type"]) {
        const std::string type = value_to_text(t);
        const int n = ++seen[type];
        ParamSpec ps;
        ps.name = n == 1 ? type : type + "_" + std::to_string(n);
        ps.type = type;
        spec.parameters.push_back(std::move(ps));
      }
    }
    tools.push_back(std::move(spec));
  }
  tools.push_back({std::string(kEndTool), "Marks the end of the plan.", {}});
  try {
    corpus.catalog = ToolCatalog(std::move(tools));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(desc_path.string(), e.what());
  }

  const fs::path data_path = dir / "data.json";
  std::istringstream lines(read_file(data_path));
  std::string line;
  std::size_t lineno = 0;
  static const std::regex node_ref(R"(^\s*<node-(\d+)>\s*$)");
  while (std::getline(lines, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string loc = locus_at(data_path.string(), lineno);
    const json obj = parse_json(line, loc);
    Demonstration demo;
    demo.query = require_string(obj, "user_request", loc);
    const char* key = obj.contains("task_nodes") ? "task_nodes" : "tool_nodes";
    const json& tnodes = require(obj, key, loc);
    if (!tnodes.is_array()) throw SchemaError(loc + ": " + key, "expected an array");
    std::vector<FunctionCall> calls;
    for (std::size_t i = 0; i < tnodes.size(); ++i) {
      const std::string nl = loc + ": " + key + "[" + std::to_string(i) + "]";
      FunctionCall call;
      call.step = i;
      call.tool = require_string(tnodes[i], "task", nl);
      if (!corpus.catalog.contains(call.tool)) {
        throw UnknownTool(nl + ".task: plan references unknown tool '" + call.tool + "'");
      }
      const auto& spec = corpus.catalog.get(call.tool);
      auto to_value = [&](const json& v) -> ArgValue {
        const std::string text = value_to_text(v);
        std::smatch m;
        if (std::regex_match(text, m, node_ref)) return OutputRef{std::stoull(m[1].str())};
        return Literal{text};
      };
      if (tnodes[i].contains("arguments") && tnodes[i]["arguments"].is_array()) {
        const auto& args = tnodes[i]["arguments"];
        for (std::size_t a = 0; a < args.size(); ++a) {
          const std::string al = nl + ".arguments[" + std::to_string(a) + "]";
          if (args[a].is_object() && args[a].contains("name")) {
            const std::string pname = value_to_text(args[a]["name"]);
            if (!spec.find_param(pname)) {
              throw SchemaError(al, "tool '" + call.tool + "' has no parameter '" + pname + "'");
            }
            call.arguments[pname] = to_value(args[a].value("value", json("")));
          } else {
            if (a >= spec.parameters.size()) {
              throw SchemaError(al, "too many positional arguments for '" + call.tool + "'");
            }
            call.arguments[spec.parameters[a].name] = to_value(args[a]);
          }
        }
      }
      calls.push_back(std::move(call));
    }
    FunctionCall end;
    end.step = calls.size();
    end.tool = std::string(kEndTool);
    calls.push_back(std::move(end));
    demo.plan = make_plan_checked(std::move(calls), loc);
    corpus.demos.push_back(std::move(demo));
  }
  return corpus;
}

}  // namespace

ToolCatalog tinyagent_builtin_catalog() {
  return parse_catalog_json(kTinyAgentCatalog, "<builtin tinyagent catalog>");
}

Plan parse_llmcompiler_plan(std::string_view text, const ToolCatalog& catalog,
                            std::string_view locus) {
  static const std::regex call_line(
      R"(^\s*(\d+)\s*\.\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*(<END_OF_PLAN>)?\s*$)");
  const std::string loc(locus);
  std::vector<FunctionCall> calls;
  bool ended = false;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    std::string_view l = trim(line);
    if (l.empty() || l.starts_with("Thought") || l == "<END_OF_PLAN>") continue;
    std::smatch m;
    const std::string ls(l);
    if (!std::regex_match(ls, m, call_line)) {
      throw SchemaError(loc + ": plan line " + std::to_string(lineno),
                        "not a numbered call: '" + ls + "'");
    }
    if (ended) {
      throw SchemaError(loc + ": plan line " + std::to_string(lineno),
                        "call after the terminal tool");
    }
    FunctionCall call;
    call.step = calls.size();
    call.tool = catalog.canonical_name(m[2].str());
    if (!catalog.contains(call.tool)) {
      throw UnknownTool(loc + ": plan references unknown tool '" + m[2].str() + "'");
    }
    const auto& spec = catalog.get(call.tool);
    const auto args = split_top_level(m[3].str());
    std::size_t positional = 0;
    for (const auto& raw : args) {
      std::string_view a = trim(raw);
      if (a.empty()) continue;
      static const std::regex kw(R"(^([A-Za-z_][A-Za-z0-9_]*)\s*=([\s\S]*)$)");
      std::smatch km;
      const std::string as(a);
      if (std::regex_match(as, km, kw) && spec.find_param(km[1].str())) {
        call.arguments[km[1].str()] = parse_llmcompiler_value(km[2].str());
      } else {
        if (positional >= spec.parameters.size()) {
          throw SchemaError(loc + ": plan line " + std::to_string(lineno),
                            "too many arguments for '" + call.tool + "'");
        }
        call.arguments[spec.parameters[positional++].name] = parse_llmcompiler_value(a);
      }
    }
    if (call.tool == kEndTool) {
      call.arguments.clear();
      ended = true;
    }
    calls.push_back(std::move(call));
  }
  if (!ended) {
    FunctionCall end;
    end.step = calls.size();
    end.tool = std::string(kEndTool);
    calls.push_back(std::move(end));
  }
  return make_plan_checked(std::move(calls), loc);
}

Corpus load_corpus(const fs::path& dir, CorpusFormat format) {
  if (!fs::is_directory(dir)) {
    throw SchemaError(dir.string(), "corpus path must be a directory");
  }
  switch (format) {
    case CorpusFormat::canonical: return load_canonical(dir);
    case CorpusFormat::tinyagent: return load_tinyagent(dir);
    case CorpusFormat::taskbench: return load_taskbench(dir);
  }
  throw std::invalid_argument("unhandled corpus format");
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "catalog.json", std::ios::binary);
    out << catalog_to_json(corpus.catalog);
  }
  std::ofstream out(dir / "demos.jsonl", std::ios::binary);
  for (const auto& d : corpus.demos) out << demo_to_json_line(d) << '\n';
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

SplitResult stratified_split(const Corpus& corpus, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0, 1)");
  }
  if (corpus.empty()) throw EmptyCorpus("cannot split an empty corpus");

  const std::size_t n_tools = corpus.catalog.size();
  std::vector<std::vector<std::pair<std::size_t, double>>> plan_counts(corpus.size());
  std::vector<double> total(n_tools, 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::map<std::size_t, double> c;
    for (const auto& call : corpus.demos[i].plan.calls()) {
      c[corpus.catalog.ordinal_of(call.tool)] += 1.0;
    }
    for (const auto& [o, n] : c) {
      plan_counts[i].emplace_back(o, n);
      total[o] += n;
    }
  }

  // Seeded shuffle fixes the order among plans with equal rarity.
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> rarest(corpus.size(), 0.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& [o, n] : plan_counts[i]) r = std::min(r, total[o]);
    rarest[i] = r;
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rarest[a] < rarest[b];
  });

  SplitResult result;
  std::vector<double> in_train(n_tools, 0.0), in_test(n_tools, 0.0);
  for (std::size_t o = 0; o < n_tools; ++o) {
    if (total[o] == 1.0) {
      result.warnings.push_back("InfeasibleSplit: tool '" + corpus.catalog.at(o).name +
                                "' occurs once; its plan is assigned to train");
    }
  }
  const double f = spec.train_fraction;
  for (std::size_t i : order) {
    // The plan's rarest tool decides; summed relative deficits break ties.
    bool singleton = false;
    std::size_t rare = plan_counts[i].front().first;
    double deficit_train = 0.0, deficit_test = 0.0;
    for (const auto& [o, n] : plan_counts[i]) {
      if (total[o] == 1.0) singleton = true;
      if (total[o] < total[rare]) rare = o;
      deficit_train += (f * total[o] - in_train[o]) / total[o];
      deficit_test += ((1.0 - f) * total[o] - in_test[o]) / total[o];
    }
    const double rare_train = f * total[rare] - in_train[rare];
    const double rare_test = (1.0 - f) * total[rare] - in_test[rare];
    bool to_train = deficit_train >= deficit_test;
    if (std::abs(rare_train - rare_test) > 1e-9) to_train = rare_train > rare_test;
    to_train = to_train || singleton;
    for (const auto& [o, n] : plan_counts[i]) (to_train ? in_train : in_test)[o] += n;
    (to_train ? result.train_indices : result.test_indices).push_back(i);
  }
  std::sort(result.train_indices.begin(), result.train_indices.end());
  std::sort(result.test_indices.begin(), result.test_indices.end());
  result.train = corpus.subset(result.train_indices);
  result.test = corpus.subset(result.test_indices);
  result.train.name = corpus.name + "-train";
  result.test.name = corpus.name + "-test";
  return result;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats s;
  s.plans = corpus.size();
  s.tools = corpus.catalog.user_tool_count();
  if (corpus.empty()) return s;
  std::vector<double> calls, deps;
  for (const auto& d : corpus.demos) {
    std::size_t n = 0;
    for (const auto& c : d.plan.calls()) n += c.tool != kEndTool;
    calls.push_back(static_cast<double>(n));
    deps.push_back(static_cast<double>(d.plan.dag().edges.size()));
  }
  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
  };
  mean_sd(calls, s.calls_mean, s.calls_sd);
  mean_sd(deps, s.deps_mean, s.deps_sd);
  return s;
}

}  // namespace dtdr
