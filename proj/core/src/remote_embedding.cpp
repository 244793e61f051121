#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <thread>

#include "dtdr/embedding.hpp"
#include "dtdr/errors.hpp"
#include "dtdr/text.hpp"
#include "http_client.hpp"

namespace dtdr {

using nlohmann::json;

namespace {

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<1024>& s) : s_(s) { s_.acquire(); }
  ~SlotGuard() { s_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<1024>& s_;
};

}  // namespace

RemoteEmbeddingProvider::RemoteEmbeddingProvider(ProviderConfig config)
    : config_(std::move(config)),
      in_flight_(std::clamp(config_.max_in_flight, 1, 1024)) {
  if (config_.endpoint.empty()) {
    throw std::invalid_argument("remote embedding provider needs an endpoint");
  }
  detail::parse_endpoint(config_.endpoint);  // validate early
}

RemoteEmbeddingProvider::~RemoteEmbeddingProvider() = default;

std::vector<Embedding> RemoteEmbeddingProvider::embed(
    std::span<const std::string> texts) const {
  for (const auto& t : texts) {
    if (trim(t).empty()) throw std::invalid_argument("cannot embed an empty string");
  }
  const auto target = detail::parse_endpoint(config_.endpoint);
  const std::string body = json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();

  std::string last_error = "no attempt made";
  const int attempts = std::max(1, config_.max_retries + 1);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(50 << std::min(attempt, 5)));
    std::optional<detail::HttpResponse> res;
    {
      SlotGuard slot(in_flight_);
      res = detail::http_post_json(target, target.path + "/embed", body, {}, config_.timeout);
    }
    if (!res) {
      last_error = "transport error";
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw RemoteUnavailable(std::string("malformed /embed response: ") + e.what());
    }
    if (!reply.contains("vectors") || !reply["vectors"].is_array()) {
      throw RemoteUnavailable("/embed response lacks a 'vectors' array");
    }
    const auto& vecs = reply["vectors"];
    if (vecs.size() != texts.size()) {
      throw RemoteUnavailable("/embed returned " + std::to_string(vecs.size()) +
                              " vectors for " + std::to_string(texts.size()) + " texts");
    }
    std::size_t dim = reply.value("dim", std::size_t{0});
    std::vector<Embedding> out;
    out.reserve(vecs.size());
    for (const auto& v : vecs) {
      Embedding e;
      e.values = v.get<std::vector<double>>();
      if (dim == 0) dim = e.dim();
      if (e.dim() != dim) throw DimMismatch("/embed returned inconsistent dims");
      for (double x : e.values) {
        if (!std::isfinite(x)) throw RemoteUnavailable("/embed returned a non-finite value");
      }
      if (config_.normalize) normalize_in_place(e);
      out.push_back(std::move(e));
    }
    std::size_t expected = 0;
    if (!dim_.compare_exchange_strong(expected, dim) && expected != dim) {
      throw DimMismatch("embedding service changed dimension from " +
                        std::to_string(expected) + " to " + std::to_string(dim));
    }
    return out;
  }
  throw RemoteUnavailable("embedding service at " + config_.endpoint + " unavailable after " +
                          std::to_string(attempts) + " attempts (" + last_error + ")");
}

std::size_t RemoteEmbeddingProvider::dim() const {
  if (const auto d = dim_.load(); d != 0) return d;
  const auto target = detail::parse_endpoint(config_.endpoint);
  std::optional<detail::HttpResponse> res;
  {
    SlotGuard slot(in_flight_);
    res = detail::http_get(target, target.path + "/health", {}, config_.timeout);
  }
  if (res && res->status == 200) {
    try {
      const auto j = json::parse(res->body);
      if (j.contains("dim") && j["dim"].is_number_unsigned()) {
        std::size_t d = j["dim"].get<std::size_t>();
        std::size_t expected = 0;
        dim_.compare_exchange_strong(expected, d);
        return dim_.load();
      }
    } catch (const json::parse_error&) {
    }
  }
  return embed_one("dimension probe").dim();
}

std::string RemoteEmbeddingProvider::describe() const {
  return "remote:" + config_.endpoint;
}

}  // namespace dtdr
