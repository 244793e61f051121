#include "fixtures.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <string_view>

#include "dtdr/rng.hpp"

namespace dtdr::testing {

ToolCatalog synthetic_catalog(std::size_t n_tools) {
  static constexpr std::array<std::string_view, 8> kVerbs = {
      "fetch", "store", "render", "notify", "convert", "search", "schedule", "archive"};
  static constexpr std::array<std::string_view, 8> kNouns = {
      "report", "image", "invoice", "ticket", "message", "record", "calendar", "folder"};
  std::vector<ToolSpec> tools;
  for (std::size_t i = 0; i < n_tools; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "tool_%02zu", i);
    ToolSpec t;
    t.name = name;
    t.description = std::string(kVerbs[i % kVerbs.size()]) + " the " +
                    std::string(kNouns[(i / kVerbs.size() + i) % kNouns.size()]) +
                    " for the user";
    for (std::size_t p = 0; p < i % 3; ++p) {
      t.parameters.push_back({"p" + std::to_string(p), "str", p == 1, ""});
    }
    tools.push_back(std::move(t));
  }
  tools.push_back({std::string(kEndTool), "Marks the end of the plan.", {}});
  return ToolCatalog(std::move(tools));
}

ToolCatalog named_catalog(const std::vector<std::string>& names) {
  std::vector<ToolSpec> tools;
  for (const auto& n : names) {
    tools.push_back({n, "Does " + n + ".", {{"input", "str", true, "output of the previous call"}}});
  }
  tools.push_back({std::string(kEndTool), "Marks the end of the plan.", {}});
  return ToolCatalog(std::move(tools));
}

Plan random_plan(const ToolCatalog& catalog, std::size_t calls, std::uint64_t seed,
                 double ref_probability) {
  Rng rng(seed);
  const std::size_t user = catalog.user_tool_count();
  std::vector<FunctionCall> out;
  for (std::size_t i = 0; i < calls; ++i) {
    FunctionCall c;
    c.step = i;
    const auto& spec = catalog.at(rng.below(user));
    c.tool = spec.name;
    for (const auto& p : spec.parameters) {
      if (i > 0 && rng.uniform() < ref_probability) {
        c.arguments[p.name] = OutputRef{rng.below(i)};
      } else {
        c.arguments[p.name] = Literal{"v" + std::to_string(rng.below(50))};
      }
    }
    out.push_back(std::move(c));
  }
  out.push_back(FunctionCall{calls, std::string(kEndTool), {}});
  return Plan(std::move(out));
}

Corpus random_corpus(const ToolCatalog& catalog, std::size_t plans, std::size_t max_calls,
                     std::uint64_t seed) {
  Corpus c;
  c.name = "random";
  c.catalog = catalog;
  Rng rng(seed);
  for (std::size_t i = 0; i < plans; ++i) {
    const std::size_t n = 1 + rng.below(max_calls);
    c.demos.push_back({"query " + std::to_string(i) + " about " + std::to_string(rng.below(1000)),
                       random_plan(catalog, n, rng.next())});
  }
  return c;
}

Demonstration chain(std::string query, const std::vector<std::string>& tools) {
  std::vector<FunctionCall> calls;
  for (std::size_t i = 0; i < tools.size(); ++i) {
    FunctionCall c{i, tools[i], {}};
    if (i > 0) c.arguments["input"] = OutputRef{i - 1};
    calls.push_back(std::move(c));
  }
  calls.push_back({tools.size(), std::string(kEndTool), {}});
  return {std::move(query), Plan(std::move(calls))};
}

std::vector<FunctionCall> reorder_topologically(const Plan& plan, Rng& rng) {
  const auto& calls = plan.calls();
  const std::size_t n = calls.size();
  std::vector<std::size_t> order, where(n, n);
  std::vector<bool> done(n, false);
  while (order.size() + 1 < n) {
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (done[i]) continue;
      bool ok = true;
      for (const auto& [name, v] : calls[i].arguments) {
        if (const auto* r = std::get_if<OutputRef>(&v); r && !done[r->step]) ok = false;
      }
      if (ok) ready.push_back(i);
    }
    const auto pick = ready[rng.below(ready.size())];
    done[pick] = true;
    where[pick] = order.size();
    order.push_back(pick);
  }
  order.push_back(n - 1);
  where[n - 1] = n - 1;
  std::vector<FunctionCall> out;
  for (std::size_t k = 0; k < n; ++k) {
    FunctionCall c = calls[order[k]];
    c.step = k;
    for (auto& [name, v] : c.arguments) {
      if (auto* r = std::get_if<OutputRef>(&v)) r->step = where[r->step];
    }
    out.push_back(std::move(c));
  }
  return out;
}

PlanPair random_plan_pair(const ToolCatalog& catalog, Rng& rng) {
  Plan truth = random_plan(catalog, 1 + rng.below(5), rng.next(), 0.5);
  std::vector<FunctionCall> pred;
  if (rng.uniform() < 0.2) {
    pred = random_plan(catalog, truth.size() - 1, rng.next(), 0.5).calls();
  } else {
    pred = reorder_topologically(truth, rng);
    if (rng.uniform() < 0.6) {
      auto& victim = pred[rng.below(pred.size())];
      for (auto& [name, v] : victim.arguments) {
        if (auto* lit = std::get_if<Literal>(&v)) {
          lit->value = rng.uniform() < 0.5 ? lit->value + "x" : " V" + lit->value.substr(1);
        } else if (victim.step > 0) {
          std::get<OutputRef>(v).step = rng.below(victim.step);
        }
        break;
      }
    }
  }
  return {std::move(pred), std::move(truth)};
}

namespace {

const std::vector<std::vector<std::string_view>>& vocab() {
  static const std::vector<std::vector<std::string_view>> v = {
      {"weather", "forecast", "rain", "umbrella", "storm", "humidity", "sunny", "temperature"},
      {"invoice", "payment", "budget", "expense", "accountant", "refund", "ledger", "salary"},
      {"guitar", "playlist", "concert", "melody", "album", "drummer", "lyrics", "orchestra"},
      {"recipe", "oven", "lasagna", "pancake", "kitchen", "spices", "dough", "grill"},
      {"flight", "passport", "airport", "luggage", "boarding", "visa", "itinerary", "hostel"},
      {"workout", "treadmill", "marathon", "yoga", "stretching", "dumbbell", "cardio", "swimming"},
      {"photo", "camera", "portrait", "lens", "gallery", "snapshot", "tripod", "exposure"},
      {"garden", "tulips", "compost", "seedling", "watering", "shovel", "greenhouse", "orchid"},
      {"homework", "teacher", "exam", "semester", "lecture", "tutor", "syllabus", "classroom"},
      {"doctor", "clinic", "prescription", "vaccine", "dentist", "allergy", "pharmacy", "therapy"},
      {"keyboard", "laptop", "monitor", "firmware", "router", "printer", "bluetooth", "charger"},
      {"puppy", "kitten", "veterinary", "leash", "aquarium", "hamster", "grooming", "parrot"},
  };
  return v;
}

}  // namespace

std::size_t family_count() { return vocab().size(); }

std::string family_query(std::size_t family, std::uint64_t seed) {
  static constexpr std::array<std::string_view, 6> kFiller = {"please", "can you", "help me with",
                                                              "today", "quickly", "my"};
  const auto& words = vocab().at(family % vocab().size());
  Rng rng(seed);
  std::string q(kFiller[rng.below(kFiller.size())]);
  for (int i = 0; i < 4; ++i) {
    q += ' ';
    q += words[rng.below(words.size())];
  }
  return q;
}

Corpus separation_corpus(std::size_t per_family, std::uint64_t seed) {
  Corpus c;
  c.name = "separation";
  c.catalog = named_catalog({"S", "T", "P", "Q"});
  Rng rng(seed);
  for (std::size_t i = 0; i < per_family; ++i) {
    c.demos.push_back(chain(family_query(0, rng.next()), {"S", "T", "P"}));
    c.demos.push_back(chain(family_query(1, rng.next()), {"S", "T", "Q"}));
  }
  return c;
}

Corpus learnability_corpus(std::size_t demos, std::uint64_t seed) {
  Corpus c;
  c.name = "learnability";
  c.catalog = named_catalog({"lookup_account", "lookup_order", "refund_account", "refund_order",
                             "ship_account", "ship_order", "email_summary", "sms_summary"});
  // Subjects pick the first tool; they are shared by both clusters, so the
  // cluster words are what separates the rest of the plan.
  static constexpr std::array<std::string_view, 2> kSubjects = {"account", "order"};
  Rng rng(seed);
  for (std::size_t i = 0; i < demos; ++i) {
    const std::size_t cluster = rng.below(2);
    const std::size_t a = rng.below(2);
    std::string q = family_query(cluster == 0 ? 1 : 4, rng.next());
    q += " for my ";
    q += kSubjects[a];
    const std::string first = a == 0 ? "lookup_account" : "lookup_order";
    const std::string second = cluster == 0 ? (a == 0 ? "refund_account" : "refund_order")
                                            : (a == 0 ? "ship_account" : "ship_order");
    const std::string third = cluster == 0 ? "email_summary" : "sms_summary";
    c.demos.push_back(chain(std::move(q), {first, second, third}));
  }
  return c;
}

Corpus clustered_corpus(std::size_t families, std::size_t per_family, std::uint64_t seed) {
  Corpus c;
  c.name = "clustered";
  const std::vector<std::string> names = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot"};
  c.catalog = named_catalog(names);
  Rng rng(seed);
  std::vector<std::vector<std::string>> chains;
  for (std::size_t f = 0; f < families; ++f) {
    Rng fr(seed ^ (0x9e37ULL * (f + 1)));
    std::vector<std::string> perm = names;
    fr.shuffle(perm);
    perm.resize(3);
    chains.push_back(perm);
  }
  for (std::size_t i = 0; i < per_family; ++i) {
    for (std::size_t f = 0; f < families; ++f) {
      c.demos.push_back(chain(family_query(f, rng.next()), chains[f]));
    }
  }
  return c;
}

Corpus order3_corpus(std::size_t per_family, std::uint64_t seed) {
  Corpus c;
  c.name = "order3";
  c.catalog = named_catalog({"a", "b", "c", "d", "x", "y"});
  Rng rng(seed);
  for (std::size_t i = 0; i < per_family; ++i) {
    c.demos.push_back(chain(family_query(rng.below(family_count()), rng.next()), {"a", "x", "y", "b"}));
    c.demos.push_back(chain(family_query(rng.below(family_count()), rng.next()), {"c", "x", "y", "d"}));
  }
  return c;
}

Corpus tinyagent_chain_corpus(std::size_t plans, std::uint64_t seed) {
  Corpus c;
  c.name = "tinyagent-chains";
  c.catalog = tinyagent_builtin_catalog();
  Rng rng(seed);
  const std::size_t user = c.catalog.user_tool_count();
  std::vector<const ToolSpec*> takes_input;
  for (std::size_t k = 0; k < user; ++k) {
    if (!c.catalog.at(k).parameters.empty()) takes_input.push_back(&c.catalog.at(k));
  }
  for (std::size_t i = 0; i < plans; ++i) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<FunctionCall> calls;
    for (std::size_t k = 0; k < n; ++k) {
      FunctionCall call{k, {}, {}};
      const ToolSpec& spec = k == 0 ? c.catalog.at(rng.below(user)) : *takes_input[rng.below(takes_input.size())];
      call.tool = spec.name;
      for (const auto& p : spec.parameters) call.arguments[p.name] = Literal{"v" + std::to_string(rng.below(9))};
      if (k > 0) call.arguments[spec.parameters.front().name] = OutputRef{k - 1};
      calls.push_back(std::move(call));
    }
    calls.push_back({n, std::string(kEndTool), {}});
    c.demos.push_back({"task " + std::to_string(i), Plan(std::move(calls))});
  }
  return c;
}

}  // namespace dtdr::testing
