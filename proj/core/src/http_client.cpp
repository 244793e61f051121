#include "http_client.hpp"

#include <httplib.h>

#include <stdexcept>

namespace dtdr::detail {

HttpTarget parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw std::invalid_argument("endpoint must include a scheme: " + std::string(url));
  }
  const auto path_start = url.find('/', scheme_end + 3);
  HttpTarget t;
  if (path_start == std::string_view::npos) {
    t.scheme_host_port = std::string(url);
  } else {
    t.scheme_host_port = std::string(url.substr(0, path_start));
    t.path = std::string(url.substr(path_start));
    while (t.path.size() > 1 && t.path.back() == '/') t.path.pop_back();
    if (t.path == "/") t.path.clear();
  }
  return t;
}

namespace {

httplib::Client make_client(const HttpTarget& target, std::chrono::milliseconds timeout) {
  httplib::Client client(target.scheme_host_port);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  return client;
}

httplib::Headers to_headers(const Headers& headers) {
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  return h;
}

std::optional<HttpResponse> convert(const httplib::Result& res) {
  if (!res) return std::nullopt;
  return HttpResponse{res->status, res->body};
}

}  // namespace

std::optional<HttpResponse> http_get(const HttpTarget& target, const std::string& path,
                                     const Headers& headers,
                                     std::chrono::milliseconds timeout) {
  auto client = make_client(target, timeout);
  return convert(client.Get(path, to_headers(headers)));
}

std::optional<HttpResponse> http_post_json(const HttpTarget& target,
                                           const std::string& path,
                                           const std::string& body,
                                           const Headers& headers,
                                           std::chrono::milliseconds timeout) {
  auto client = make_client(target, timeout);
  return convert(client.Post(path, to_headers(headers), body, "application/json"));
}

}  // namespace dtdr::detail
