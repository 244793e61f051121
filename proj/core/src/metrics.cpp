#include "dtdr/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <nlohmann/json.hpp>

#include "dtdr/errors.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

using nlohmann::json;

std::vector<ToolName> extended_ranking(const RetrievalResult& retrieved,
                                       const ToolCatalog& catalog) {
  std::vector<ToolName> out = retrieved.support();
  std::set<ToolName> seen(out.begin(), out.end());
  for (const auto& tool : catalog.tools()) {
    if (!seen.count(tool.name)) out.push_back(tool.name);
  }
  return out;
}

double mrr_at_step(const RetrievalResult& retrieved, const std::set<ToolName>& acceptable,
                   const ToolCatalog& catalog) {
  const auto ranking = extended_ranking(retrieved, catalog);
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (acceptable.count(ranking[r])) return 1.0 / static_cast<double>(r + 1);
  }
  return 0.0;
}

double f1_at_k(const RetrievalResult& retrieved, const std::set<ToolName>& acceptable,
               const ToolCatalog& catalog) {
  const std::size_t k = acceptable.size();
  if (k == 0) return 0.0;
  const auto ranking = extended_ranking(retrieved, catalog);
  const std::size_t top = std::min(k, ranking.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) hits += acceptable.count(ranking[i]);
  if (hits == 0) return 0.0;
  const double p = static_cast<double>(hits) / static_cast<double>(top);
  const double r = static_cast<double>(hits) / static_cast<double>(k);
  return 2.0 * p * r / (p + r);
}

std::optional<double> fsa(std::span<const StepRecord> records) {
  std::size_t n = 0, correct = 0;
  for (const auto& rec : records) {
    if (!rec.selected) continue;
    ++n;
    if (*rec.selected != kInvalidTool && rec.acceptable.count(*rec.selected)) ++correct;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(n);
}

namespace {

std::string normalize_literal(std::string_view v) { return to_lower(trim(v)); }

}  // namespace

bool plan_success(std::span<const FunctionCall> predicted, const Plan& truth) {
  const auto& gold = truth.calls();
  const std::size_t n = gold.size();
  if (predicted.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (predicted[i].step != i) return false;
    for (const auto& [name, v] : predicted[i].arguments) {
      if (const auto* ref = std::get_if<OutputRef>(&v); ref && ref->step >= i) return false;
    }
  }
  // Partition by tool name first: every name must occur equally often.
  std::map<ToolName, int> balance;
  for (std::size_t i = 0; i < n; ++i) {
    ++balance[predicted[i].tool];
    --balance[gold[i].tool];
  }
  for (const auto& [tool, b] : balance) {
    if (b != 0) return false;
  }

  std::vector<std::size_t> map(n, n);  // predicted index -> gold index
  std::vector<bool> used(n, false);

  auto compatible = [&](std::size_t i, std::size_t j) {
    const auto& a = predicted[i].arguments;
    const auto& b = gold[j].arguments;
    if (a.size() != b.size()) return false;
    for (auto ita = a.begin(), itb = b.begin(); ita != a.end(); ++ita, ++itb) {
      if (ita->first != itb->first) return false;
      const auto* la = std::get_if<Literal>(&ita->second);
      const auto* lb = std::get_if<Literal>(&itb->second);
      if (la && lb) {
        if (normalize_literal(la->value) != normalize_literal(lb->value)) return false;
      } else if (!la && !lb) {
        // Predicted refs point at earlier predicted calls, which are mapped.
        if (map[std::get<OutputRef>(ita->second).step] != std::get<OutputRef>(itb->second).step) {
          return false;
        }
      } else {
        return false;
      }
    }
    return true;
  };

  std::function<bool(std::size_t)> assign = [&](std::size_t i) {
    if (i == n) return true;
    for (std::size_t j = 0; j < n; ++j) {
      if (used[j] || gold[j].tool != predicted[i].tool || !compatible(i, j)) continue;
      used[j] = true;
      map[i] = j;
      if (assign(i + 1)) return true;
      used[j] = false;
      map[i] = n;
    }
    return false;
  };
  return assign(0);
}

EvalReport aggregate(std::span<const StepRecord> records, std::span<const PlanRecord> plans,
                     const ToolCatalog& catalog) {
  if (records.empty() && plans.empty()) throw EmptyEval("nothing to aggregate");
  EvalReport r;
  r.steps = records.size();
  r.plans = plans.size();

  std::size_t scored = 0, prompted = 0;
  double mrr = 0.0, f1 = 0.0;
  PromptSummary ps;
  for (const auto& rec : records) {
    r.mean_retrieved += static_cast<double>(rec.retrieved.size());
    r.backoff_rate += rec.retrieved.backed_off() ? 1.0 : 0.0;
    r.fallback_rate += rec.retrieved.fallback() ? 1.0 : 0.0;
    if (!rec.acceptable.empty()) {
      ++scored;
      mrr += mrr_at_step(rec.retrieved, rec.acceptable, catalog);
      f1 += f1_at_k(rec.retrieved, rec.acceptable, catalog);
    }
    if (rec.prompt) {
      ++prompted;
      ps.constant_chars += static_cast<double>(rec.prompt->constant_chars);
      ps.variable_chars += static_cast<double>(rec.prompt->variable_chars);
      ps.constant_tokens += static_cast<double>(rec.prompt->constant_tokens);
      ps.variable_tokens += static_cast<double>(rec.prompt->variable_tokens);
    }
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    r.mean_retrieved /= n;
    r.backoff_rate /= n;
    r.fallback_rate /= n;
  }
  if (scored > 0) {
    r.mrr = mrr / static_cast<double>(scored);
    r.f1 = f1 / static_cast<double>(scored);
  }
  if (prompted > 0) {
    const double n = static_cast<double>(prompted);
    ps.constant_chars /= n;
    ps.variable_chars /= n;
    ps.constant_tokens /= n;
    ps.variable_tokens /= n;
    ps.total_chars = ps.constant_chars + ps.variable_chars;
    ps.total_tokens = ps.constant_tokens + ps.variable_tokens;
    r.prompt = ps;
  }
  r.fsa = fsa(records);
  if (!plans.empty()) {
    std::size_t ok = 0;
    for (const auto& p : plans) ok += p.success ? 1 : 0;
    r.success_rate = static_cast<double>(ok) / static_cast<double>(plans.size());
  }
  return r;
}

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json to_json(const EvalReport& r) {
  json j = {{"steps", r.steps},
            {"plans", r.plans},
            {"mrr", opt(r.mrr)},
            {"f1", opt(r.f1)},
            {"fsa", opt(r.fsa)},
            {"success_rate", opt(r.success_rate)},
            {"mean_retrieved", r.mean_retrieved},
            {"backoff_rate", r.backoff_rate},
            {"fallback_rate", r.fallback_rate}};
  if (r.prompt) {
    j["prompt"] = {{"constant_chars", r.prompt->constant_chars},
                   {"variable_chars", r.prompt->variable_chars},
                   {"total_chars", r.prompt->total_chars},
                   {"constant_tokens", r.prompt->constant_tokens},
                   {"variable_tokens", r.prompt->variable_tokens},
                   {"total_tokens", r.prompt->total_tokens}};
  } else {
    j["prompt"] = nullptr;
  }
  return j;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_to_json(std::span<const ReportRow> rows) {
  json arr = json::array();
  for (const auto& row : rows) {
    arr.push_back({{"dataset", row.dataset},
                   {"method", row.method},
                   {"model", row.model},
                   {"icl", row.icl},
                   {"sweep", row.sweep_param.empty()
                                 ? json(nullptr)
                                 : json{{"param", row.sweep_param}, {"value", row.sweep_value}}},
                   {"metrics", to_json(row.report)}});
  }
  return json{{"format", "dtdr-report/1"}, {"rows", std::move(arr)}}.dump(2) + "\n";
}

namespace {

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::vector<ReportRow> report_from_json(std::string_view text, std::string_view locus) {
  std::vector<ReportRow> rows;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "dtdr-report/1") {
      throw SchemaError(std::string(locus), "not a dtdr report");
    }
    for (const auto& j : doc.at("rows")) {
      ReportRow row;
      row.dataset = j.at("dataset").get<std::string>();
      row.method = j.at("method").get<std::string>();
      row.model = j.at("model").get<std::string>();
      row.icl = j.at("icl").get<std::string>();
      if (const auto& s = j.at("sweep"); !s.is_null()) {
        row.sweep_param = s.at("param").get<std::string>();
        row.sweep_value = s.at("value").get<std::string>();
      }
      const auto& m = j.at("metrics");
      auto& r = row.report;
      r.steps = m.at("steps").get<std::size_t>();
      r.plans = m.at("plans").get<std::size_t>();
      r.mrr = opt_number(m, "mrr");
      r.f1 = opt_number(m, "f1");
      r.fsa = opt_number(m, "fsa");
      r.success_rate = opt_number(m, "success_rate");
      r.mean_retrieved = m.at("mean_retrieved").get<double>();
      r.backoff_rate = m.at("backoff_rate").get<double>();
      r.fallback_rate = m.at("fallback_rate").get<double>();
      if (const auto& p = m.at("prompt"); !p.is_null()) {
        r.prompt = PromptSummary{p.at("constant_chars").get<double>(),
                                 p.at("variable_chars").get<double>(),
                                 p.at("total_chars").get<double>(),
                                 p.at("constant_tokens").get<double>(),
                                 p.at("variable_tokens").get<double>(),
                                 p.at("total_tokens").get<double>()};
      }
      rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string(locus), e.what());
  }
  return rows;
}

std::string csv_header() {
  return "dataset,method,model,icl,sweep_param,sweep_value,steps,plans,mrr,f1,fsa,success_rate,"
         "constant_chars,variable_chars,total_chars,constant_tokens,variable_tokens,total_tokens,"
         "mean_retrieved,backoff_rate,fallback_rate";
}

std::string report_to_csv(std::span<const ReportRow> rows) {
  std::string out = csv_header() + "\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::vector<std::string> f = {csv_field(row.dataset), csv_field(row.method),
                                  csv_field(row.model), csv_field(row.icl),
                                  csv_field(row.sweep_param), csv_field(row.sweep_value),
                                  std::to_string(r.steps), std::to_string(r.plans),
                                  num(r.mrr), num(r.f1), num(r.fsa), num(r.success_rate)};
    if (r.prompt) {
      for (double v : {r.prompt->constant_chars, r.prompt->variable_chars, r.prompt->total_chars,
                       r.prompt->constant_tokens, r.prompt->variable_tokens, r.prompt->total_tokens}) {
        f.push_back(num(v));
      }
    } else {
      f.insert(f.end(), 6, std::string());
    }
    f.push_back(num(r.mean_retrieved));
    f.push_back(num(r.backoff_rate));
    f.push_back(num(r.fallback_rate));
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (i) out += ',';
      out += f[i];
    }
    out += '\n';
  }
  return out;
}

}  // namespace dtdr
