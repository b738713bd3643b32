#pragma once

#include <cstdint>
#include <vector>

namespace quamba {

struct KMeansResult {
  std::vector<std::size_t> labels;             // one per point
  std::vector<std::vector<double>> centroids;  // k × dim
  std::size_t iterations = 0;
  double sse = 0.0;
};

// Lloyd's algorithm from n_init k-means++ seedings drawn in turn from
// Rng(seed); the lowest-SSE run wins (first on ties). Ties in assignment go to
// the lower cluster index; a cluster that empties is reseeded with the point
// farthest from its current centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed = 0, std::size_t max_iter = 100, std::size_t n_init = 10);

// Within-cluster sum of squared distances to the cluster means.
double clustering_sse(const std::vector<std::vector<double>>& points,
                      const std::vector<std::size_t>& labels, std::size_t k);

}  // namespace quamba
