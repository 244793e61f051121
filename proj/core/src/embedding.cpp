#include "dtdr/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/hash.hpp"
#include "dtdr/text.hpp"

namespace dtdr {

double Embedding::norm() const noexcept {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw DimMismatch("cosine of embeddings with dims " + std::to_string(a.dim()) +
                      " and " + std::to_string(b.dim()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double c = dot / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

void normalize_in_place(Embedding& e) noexcept {
  const double n = e.norm();
  if (n == 0.0) return;
  for (double& v : e.values) v /= n;
}

std::string compose_retrieval_input(std::string_view query,
                                    std::span<const ToolName> history) {
  std::string out(query);
  if (history.empty()) return out;
  out += " | history: ";
  out += join(history, " -> ");
  return out;
}

Embedding EmbeddingProvider::embed_one(std::string_view text) const {
  std::string t(text);
  auto v = embed(std::span<const std::string>(&t, 1));
  return std::move(v.front());
}

HashedEmbeddingProvider::HashedEmbeddingProvider(std::size_t dim, bool normalize)
    : dim_(dim), normalize_(normalize) {
  if (dim_ < 8) throw std::invalid_argument("embedding dim must be >= 8");
}

std::vector<Embedding> HashedEmbeddingProvider::embed(
    std::span<const std::string> texts) const {
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    if (trim(text).empty()) throw std::invalid_argument("cannot embed an empty string");
    // Collapse whitespace runs and pad so word boundaries become features.
    std::string s = " ";
    bool prev_space = true;
    for (char c : to_lower(trim(text))) {
      const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
      if (space) {
        if (!prev_space) s += ' ';
      } else {
        s += c;
      }
      prev_space = space;
    }
    if (s.back() != ' ') s += ' ';

    Embedding e;
    e.values.assign(dim_, 0.0);
    for (std::size_t n = 3; n <= 5; ++n) {
      if (s.size() < n) break;
      for (std::size_t i = 0; i + n <= s.size(); ++i) {
        const std::uint64_t h = fnv1a(std::string_view(s).substr(i, n));
        const std::uint64_t m = mix64(h);
        const std::size_t bucket = static_cast<std::size_t>(m % dim_);
        e.values[bucket] += (m >> 63) ? -1.0 : 1.0;
      }
    }
    if (normalize_) normalize_in_place(e);
    out.push_back(std::move(e));
  }
  return out;
}

std::string HashedEmbeddingProvider::describe() const {
  return "hashed-ngram-" + std::to_string(dim_);
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config) {
  switch (config.kind) {
    case ProviderConfig::Kind::hashed:
      return std::make_unique<HashedEmbeddingProvider>(config.dim, config.normalize);
    case ProviderConfig::Kind::remote:
      return std::make_unique<RemoteEmbeddingProvider>(config);
  }
  throw std::invalid_argument("unknown provider kind");
}

}  // namespace dtdr
