#pragma once

// Thin synchronous HTTP helper shared by the remote embedding provider and
// the remote chat backend. Keeps cpp-httplib out of every other translation
// unit.

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dtdr::detail {

struct HttpTarget {
  std::string scheme_host_port;  // "http://host:port"
  std::string path;              // "/v1/chat/completions", may be empty
};

/// Splits "http://host:port/some/path" into its origin and path.
HttpTarget parse_endpoint(std::string_view url);

struct HttpResponse {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

/// One attempt. nullopt means a transport error (connect, timeout).
std::optional<HttpResponse> http_get(const HttpTarget& target, const std::string& path,
                                     const Headers& headers,
                                     std::chrono::milliseconds timeout);
std::optional<HttpResponse> http_post_json(const HttpTarget& target,
                                           const std::string& path,
                                           const std::string& body,
                                           const Headers& headers,
                                           std::chrono::milliseconds timeout);

}  // namespace dtdr::detail
