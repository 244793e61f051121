#include "dtdr/kmeans.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dtdr/errors.hpp"
#include "dtdr/rng.hpp"

namespace dtdr {

double squared_distance(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) throw DimMismatch("k-means points have different dims");
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return s;
}

std::size_t KMeansModel::nearest(const Embedding& e) const {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(e, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::size_t> KMeansModel::cluster_sizes() const {
  std::vector<std::size_t> sizes(centroids.size(), 0);
  for (std::size_t a : assignment) ++sizes[a];
  return sizes;
}

namespace {

std::vector<Embedding> seed_plus_plus(std::span<const Embedding> points, std::size_t k,
                                      Rng& rng) {
  std::vector<Embedding> centroids;
  centroids.reserve(k);
  centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);

  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    if (total == 0.0) {
      // Every point coincides with a centroid already; the rest stay empty.
      centroids.push_back(centroids.back());
      continue;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc > target && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (d2[pick] == 0.0) --pick;  // rounding at the tail
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

}  // namespace

KMeansModel fit_kmeans(std::span<const Embedding> points, std::size_t k, std::uint64_t seed,
                       const KMeansOptions& options) {
  if (k == 0) throw std::invalid_argument("k-means needs K >= 1");
  if (k > points.size()) {
    throw std::invalid_argument("k-means K=" + std::to_string(k) + " exceeds " +
                                std::to_string(points.size()) + " points");
  }
  const std::size_t dim = points.front().dim();
  for (const auto& p : points) {
    if (p.dim() != dim) throw DimMismatch("k-means points have different dims");
  }
  if (k > 1) {
    bool identical = true;
    for (const auto& p : points) {
      if (p.values != points.front().values) {
        identical = false;
        break;
      }
    }
    if (identical) throw DegenerateInput("all points are identical; cannot form K > 1 clusters");
  }

  Rng rng(seed);
  KMeansModel m;
  m.centroids = seed_plus_plus(points, k, rng);
  m.assignment.assign(points.size(), 0);

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    m.iterations = iter + 1;
    for (std::size_t i = 0; i < points.size(); ++i) m.assignment[i] = m.nearest(points[i]);

    std::vector<Embedding> next(k, Embedding{std::vector<double>(dim, 0.0)});
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& acc = next[m.assignment[i]].values;
      for (std::size_t j = 0; j < dim; ++j) acc[j] += points[i].values[j];
      ++count[m.assignment[i]];
    }
    std::vector<bool> taken(points.size(), false);
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        for (double& v : next[c].values) v /= static_cast<double>(count[c]);
        continue;
      }
      // Empty: re-seed at the point farthest from its own centroid, if any
      // point is not sitting on one.
      std::size_t far = points.size();
      double far_d = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (taken[i]) continue;
        const double d = squared_distance(points[i], m.centroids[m.assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far < points.size()) {
        taken[far] = true;
        next[c] = points[far];
      } else {
        next[c] = m.centroids[c];
      }
    }

    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(next[c], m.centroids[c])));
    }
    m.centroids = std::move(next);
    if (shift < options.tolerance) break;
  }
  for (std::size_t i = 0; i < points.size(); ++i) m.assignment[i] = m.nearest(points[i]);
  return m;
}

}  // namespace dtdr
