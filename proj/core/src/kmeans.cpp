#include "quamba/kmeans.hpp"

#include <limits>

#include "quamba/error.hpp"
#include "quamba/rng.hpp"

namespace quamba {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& cs) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < cs.size(); ++c) {
    const double d = sq_dist(p, cs[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<std::vector<double>> plus_plus_init(const std::vector<std::vector<double>>& pts,
                                                std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> cs;
  cs.push_back(pts[rng.below(pts.size())]);
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  while (cs.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(pts[i], cs.back()));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = pts.size() - 1;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(pts.size());
    }
    cs.push_back(pts[pick]);
  }
  return cs;
}

KMeansResult lloyd(const std::vector<std::vector<double>>& points, std::size_t k,
                   std::vector<std::vector<double>> centroids, std::size_t max_iter) {
  const std::size_t dim = points[0].size();
  KMeansResult r;
  r.centroids = std::move(centroids);
  r.labels.assign(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) r.labels[i] = nearest(points[i], r.centroids);

  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++count[r.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sum[r.labels[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] == 0) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          const double d = sq_dist(points[i], r.centroids[r.labels[i]]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        r.centroids[c] = points[far];
      } else {
        for (std::size_t j = 0; j < dim; ++j)
          r.centroids[c][j] = sum[c][j] / static_cast<double>(count[c]);
      }
    }
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t l = nearest(points[i], r.centroids);
      changed |= l != r.labels[i];
      r.labels[i] = l;
    }
    if (!changed) break;
  }
  r.iterations = std::min(r.iterations, max_iter);
  r.sse = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    r.sse += sq_dist(points[i], r.centroids[r.labels[i]]);
  return r;
}

}  // namespace

double clustering_sse(const std::vector<std::vector<double>>& points,
                      const std::vector<std::size_t>& labels, std::size_t k) {
  QUAMBA_CHECK(labels.size() == points.size(), "one label per point required");
  if (points.empty()) return 0.0;
  const std::size_t dim = points[0].size();
  std::vector<std::vector<double>> mean(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    ++count[labels[i]];
    for (std::size_t j = 0; j < dim; ++j) mean[labels[i]][j] += points[i][j];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (count[c] > 0)
      for (auto& v : mean[c]) v /= static_cast<double>(count[c]);
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], mean[labels[i]]);
  return s;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter, std::size_t n_init) {
  QUAMBA_CHECK(k >= 1, "k must be at least 1");
  QUAMBA_CHECK(n_init >= 1, "k-means needs at least one initialization");
  QUAMBA_CHECK(points.size() >= k, "k-means needs at least k points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) QUAMBA_CHECK(p.size() == dim, "k-means points differ in dimension");

  Rng rng(seed);
  KMeansResult best;
  for (std::size_t run = 0; run < n_init; ++run) {
    KMeansResult r = lloyd(points, k, plus_plus_init(points, k, rng), max_iter);
    if (run == 0 || r.sse < best.sse) best = std::move(r);
  }
  return best;
}

}  // namespace quamba
