#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dtdr/embedding.hpp"

namespace dtdr {

struct KMeansModel {
  std::vector<Embedding> centroids;
  std::vector<std::size_t> assignment;  // per input point
  std::size_t iterations = 0;

  std::size_t k() const noexcept { return centroids.size(); }
  /// Index of the nearest centroid by squared Euclidean distance; ties go to
  /// the lower index.
  std::size_t nearest(const Embedding& e) const;
  std::vector<std::size_t> cluster_sizes() const;
};

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;  // max centroid shift (Euclidean)
};

/// k-means++ seeding followed by Lloyd iterations.
///
/// When there are fewer distinct points than K the surplus centroids
/// duplicate existing ones and end up empty. Clusters that empty out while
/// distinct points remain are re-seeded at the point farthest from its
/// centroid.
///
/// Throws std::invalid_argument unless 1 <= K <= |points|, DimMismatch on
/// ragged input, DegenerateInput when every point is identical and K > 1.
KMeansModel fit_kmeans(std::span<const Embedding> points, std::size_t k,
                       std::uint64_t seed, const KMeansOptions& options = {});

double squared_distance(const Embedding& a, const Embedding& b);

}  // namespace dtdr
