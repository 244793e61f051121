#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtdr {

std::string_view trim(std::string_view s) noexcept;
std::string to_lower(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);

/// Lowercased maximal runs of ASCII alphanumerics.
std::vector<std::string> word_tokens(std::string_view text);

/// Whitespace-delimited token count.
std::size_t whitespace_token_count(std::string_view text) noexcept;

}  // namespace dtdr
