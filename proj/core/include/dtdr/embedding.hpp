#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dtdr/model.hpp"

namespace dtdr {

struct Embedding {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  double norm() const noexcept;
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

/// Throws DimMismatch. Returns 0 when either vector is zero.
double cosine(const Embedding& a, const Embedding& b);

void normalize_in_place(Embedding& e) noexcept;

/// Text fed to history-aware encoders: the query, then " | history: ", then
/// the tool names joined by " -> ". An empty history yields the bare query.
std::string compose_retrieval_input(std::string_view query,
                                    std::span<const ToolName> history);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  /// Output order matches input order. Throws std::invalid_argument for empty
  /// strings.
  virtual std::vector<Embedding> embed(std::span<const std::string> texts) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string describe() const = 0;

  Embedding embed_one(std::string_view text) const;
};

struct ProviderConfig {
  enum class Kind { hashed, remote };

  Kind kind = Kind::hashed;
  std::size_t dim = 256;  // hashed only; must be >= 8
  std::string endpoint;   // remote only, e.g. "http://127.0.0.1:8080"
  bool normalize = true;
  int max_retries = 3;
  int max_in_flight = 4;
  std::chrono::milliseconds timeout{30000};
};

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& config);

/// Signed feature hashing of character 3..5-grams of the lowercased,
/// space-padded text. Deterministic across platforms.
class HashedEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashedEmbeddingProvider(std::size_t dim = 256, bool normalize = true);

  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  std::size_t dim() const override { return dim_; }
  std::string describe() const override;

 private:
  std::size_t dim_;
  bool normalize_;
};

/// Client for the `/embed` wire contract:
///   POST {endpoint}/embed {"texts": [...]} -> {"vectors": [[...]], "dim": n}
/// Non-200 responses and transport failures are retried, then surface as
/// RemoteUnavailable. The dimension is taken from the service.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(ProviderConfig config);
  ~RemoteEmbeddingProvider() override;

  std::vector<Embedding> embed(std::span<const std::string> texts) const override;
  /// Probes the service on first use when no embed call has reported it yet.
  std::size_t dim() const override;
  std::string describe() const override;

 private:
  ProviderConfig config_;
  mutable std::atomic<std::size_t> dim_{0};
  mutable std::counting_semaphore<1024> in_flight_;
};

}  // namespace dtdr
