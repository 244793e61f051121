#include <algorithm>
#include <cstdlib>
#include <nlohmann/json.hpp>
#include <semaphore>
#include <thread>

#include "dtdr/agent.hpp"
#include "dtdr/errors.hpp"
#include "http_client.hpp"

namespace dtdr {

using nlohmann::json;

struct ChatBackend::State {
  explicit State(int cap) : in_flight(std::clamp(cap, 1, 1024)) {}
  std::counting_semaphore<1024> in_flight;
  detail::HttpTarget target;
  detail::Headers headers;
};

ChatBackend::ChatBackend(ChatConfig config)
    : config_(std::move(config)), state_(std::make_unique<State>(config_.max_in_flight)) {
  if (config_.endpoint.empty()) throw std::invalid_argument("chat backend needs an endpoint");
  state_->target = detail::parse_endpoint(config_.endpoint);
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      state_->headers.emplace_back(config_.auth_header, std::string("Bearer ") + key);
    }
  }
}

ChatBackend::~ChatBackend() = default;

std::string ChatBackend::complete(std::string_view system, std::string_view user,
                                  int max_tokens) const {
  const json body = {{"model", config_.model},
                     {"messages",
                      json::array({{{"role", "system"}, {"content", system}},
                                   {{"role", "user"}, {"content", user}}})},
                     {"temperature", 0},
                     {"max_tokens", max_tokens}};
  const std::string payload = body.dump();
  const std::string path = state_->target.path.empty() ? "/" : state_->target.path;
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= std::max(0, config_.max_retries); ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << std::min(attempt, 5)));
    std::optional<detail::HttpResponse> res;
    {
      state_->in_flight.acquire();
      res = detail::http_post_json(state_->target, path, payload, state_->headers, config_.timeout);
      state_->in_flight.release();
    }
    if (!res) {
      last_error = "transport error or timeout";
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const auto reply = json::parse(res->body);
      const auto& choice = reply.at("choices").at(0);
      if (choice.contains("message")) return choice.at("message").at("content").get<std::string>();
      return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
      throw BackendUnavailable(std::string("malformed chat response: ") + e.what());
    }
  }
  throw BackendUnavailable("chat endpoint " + config_.endpoint + " unavailable (" + last_error + ")");
}

std::string ChatBackend::select(const SelectionRequest& request) const {
  const int budget = static_cast<int>(request.catalog->longest_name()) + 8;
  return complete(request.prompt->constant_text, request.prompt->variable_text, budget);
}

std::string ChatBackend::fill(const ParamFillRequest& request) const {
  return complete(request.prompt->constant_text, request.prompt->variable_text,
                  config_.paramfill_max_tokens);
}

}  // namespace dtdr
