#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>

#include "oracles.hpp"
#include "quamba/calibrate.hpp"
#include "quamba/error.hpp"
#include "quamba/kmeans.hpp"
#include "quamba/metrics.hpp"
#include "quamba/model.hpp"
#include "quamba/quantizer.hpp"
#include "quamba/toy_model.hpp"

using namespace quamba;

namespace {

CalibStats stats_of(std::vector<float> channel_max) {
  CalibStats s;
  s.channel_max = std::move(channel_max);
  s.sample_count = 1;
  return s;
}

std::set<std::size_t> group_of(const ClusterMap& cm, std::size_t head) {
  for (std::size_t g = 0; g < cm.m(); ++g) {
    std::set<std::size_t> s(cm.head_perm.begin() + static_cast<long>(cm.head_group_bounds[g]),
                            cm.head_perm.begin() + static_cast<long>(cm.head_group_bounds[g + 1]));
    if (s.count(head)) return s;
  }
  return {};
}

}  // namespace

TEST(CalibStats, ObserveExamples) {
  CalibStats s;
  s.observe(Tensor({2, 3}, {1.0f, -5.0f, 0.0f, -2.0f, 3.0f, 0.5f}));
  EXPECT_EQ(s.channel_max, (std::vector<float>{2.0f, 5.0f, 0.5f}));
  EXPECT_EQ(s.sample_count, 1u);
  EXPECT_EQ(s.max(), 5.0f);
  s.observe(Tensor({1, 3}, {7.0f, 0.0f, 0.0f}), true);
  EXPECT_EQ(s.channel_max, (std::vector<float>{7.0f, 5.0f, 0.5f}));
  EXPECT_THROW(s.observe(Tensor({1, 4})), Error);
}

TEST(CalibStats, MergeIsOrderIndependent) {
  std::vector<CalibStats> parts(5);
  for (std::size_t i = 0; i < 5; ++i) parts[i].observe(oracle::random_tensor({3, 8}, i));
  CalibStats fwd, rev;
  for (std::size_t i = 0; i < 5; ++i) fwd.merge(parts[i]);
  for (std::size_t i = 5; i-- > 0;) rev.merge(parts[i]);
  EXPECT_EQ(fwd, rev);
  EXPECT_EQ(fwd.sample_count, 5u);
}

TEST(CollectStats, SampleOrderInvariant) {
  ToyConfig tc;
  tc.dims.d_model = 32;
  tc.dims.d_inner = 64;
  tc.dims.n_heads = 4;
  const FloatModel m = generate_toy_model(tc);
  const Tensor tok = generate_tokens(m.config.vocab, 6, 16, 3);
  Tensor rev(tok.shape());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t t = 0; t < 16; ++t) rev.at(r, t) = tok.at(5 - r, t);
  const auto a = collect_stats(m, tok).stats, b = collect_stats(m, rev).stats;
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.count(stats_key(0, Site::X)));
  EXPECT_EQ(a.at(stats_key(1, Site::X)).channel_max.size(), 64u);
  EXPECT_EQ(a.at(stats_key(0, Site::B)).sample_count, 6u);
}

TEST(SortAndCluster, PairedHeadsExample) {
  const auto cm = sort_and_cluster(stats_of({10, 1, 0.1f, 0.05f, 9, 1.2f, 0.12f, 0.04f}), 4, 2, {2, 1});
  EXPECT_EQ(group_of(cm, 0), (std::set<std::size_t>{0, 2}));
  EXPECT_EQ(group_of(cm, 1), (std::set<std::size_t>{1, 3}));
  // The larger group comes first.
  EXPECT_EQ(group_of(cm, cm.head_perm[0]), (std::set<std::size_t>{0, 2}));
  EXPECT_FLOAT_EQ(cm.scales[0], 10.0f / 127);
  EXPECT_FLOAT_EQ(cm.scales[1], 0.12f / 127);
  EXPECT_FALSE(cm.fallback);
}

TEST(SortAndCluster, HeadGroupsMatchExhaustiveOptimum) {
  std::mt19937_64 gen(4);
  std::lognormal_distribution<double> scale(0.0, 1.5);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t heads = 3 + static_cast<std::size_t>(trial % 8), hd = 3;
    std::vector<float> mx;
    for (std::size_t h = 0; h < heads; ++h) {
      const double s = trial % 2 == 0 ? (h % 2 ? 20.0 : 1.0) * u(gen) : scale(gen);
      for (std::size_t p = 0; p < hd; ++p) mx.push_back(static_cast<float>(s * u(gen)));
    }
    const auto cm = sort_and_cluster(stats_of(mx), heads, hd, {2, 1});
    std::vector<std::vector<double>> pts(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      std::vector<double> v(mx.begin() + static_cast<long>(h * hd), mx.begin() + static_cast<long>((h + 1) * hd));
      std::sort(v.rbegin(), v.rend());
      pts[h] = v;
    }
    const auto best = oracle::best_two_clustering(pts);
    std::vector<std::size_t> got(heads);
    for (std::size_t h = 0; h < heads; ++h) got[h] = cm.head_group_of(static_cast<std::size_t>(
        std::find(cm.head_perm.begin(), cm.head_perm.end(), h) - cm.head_perm.begin()));
    std::vector<std::size_t> ref(best.begin(), best.end());
    EXPECT_NEAR(clustering_sse(pts, got, 2), clustering_sse(pts, ref, 2), 1e-9 * (1 + clustering_sse(pts, ref, 2)))
        << "trial " << trial;
  }
}

TEST(SortAndCluster, SingleCellIsPerTensor) {
  const Tensor x = oracle::random_tensor({4, 32}, 1);
  CalibStats s;
  s.observe(x);
  const auto cm = sort_and_cluster(s, 4, 8, {1, 1});
  ASSERT_EQ(cm.scales.size(), 1u);
  EXPECT_EQ(cm.scales[0], compute_scale(x.data(), 8));
  // m, n are capped by the geometry.
  const auto capped = sort_and_cluster(s, 4, 8, {9, 20});
  EXPECT_EQ(capped.m(), 4u);
  EXPECT_EQ(capped.n(), 8u);
}

TEST(SortAndCluster, SortedAndContiguous) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = oracle::random_tensor({16, 64}, seed);
    CalibStats s;
    s.observe(x);
    const auto cm = sort_and_cluster(s, 8, 8, {4, 4, seed});
    cm.validate();
    for (std::size_t h = 0; h < 8; ++h)
      for (std::size_t p = 1; p < 8; ++p)
        EXPECT_GE(s.channel_max[h * 8 + cm.channel_perm[h][p - 1]], s.channel_max[h * 8 + cm.channel_perm[h][p]]);
    // Every channel's maximum fits its cell scale.
    const auto cells = cm.cell_index(false);
    for (std::size_t c = 0; c < 64; ++c) EXPECT_LE(s.channel_max[c] / 127, cm.scales[cells[c]] * (1 + 1e-6f));
  }
}

TEST(SortAndCluster, ClusteredErrorAtMostPerTensor) {
  const FloatModel m = generate_toy_model(ToyConfig{});
  const Tensor tok = generate_tokens(m.config.vocab, 4, 32, 1);
  CollectOptions o;
  o.sites = {Site::X};
  o.keep_inputs = false;
  Tensor x_sample;
  const ModelObserver obs = [&](std::size_t b, Site s, const Tensor& v) {
    if (b == 0 && s == Site::X && x_sample.empty()) x_sample = v;
  };
  const Tokens row = token_row(tok, 0);
  model_forward(m, row, {}, &obs);
  const auto stats = collect_stats(m, tok, o).stats.at(stats_key(0, Site::X));
  const auto& d = m.config.dims;
  const auto cm = sort_and_cluster(stats, d.n_heads, d.head_dim, {4, 4});
  const auto cells = cm.cell_index(false);
  const ScaleLayout cl = ScaleLayout::clustered(1, cells, cm.scales);
  const ScaleLayout pt = ScaleLayout::per_tensor(compute_scale(stats.channel_max, 8));
  const double e_cl = mse(fake_quantize(x_sample, cl, 8), x_sample);
  const double e_pt = mse(fake_quantize(x_sample, pt, 8), x_sample);
  EXPECT_LE(e_cl, e_pt);
}

TEST(SortAndCluster, HeldOutMaximaStaySorted) {
  const FloatModel m = generate_toy_model(ToyConfig{});
  CollectOptions o;
  o.sites = {Site::X};
  const auto& d = m.config.dims;
  for (std::size_t b = 0; b < m.config.n_blocks; ++b) {
    const auto calib = collect_stats(m, generate_tokens(m.config.vocab, 8, 64, 1), o).stats.at(stats_key(b, Site::X));
    const auto held = collect_stats(m, generate_tokens(m.config.vocab, 8, 64, 77), o).stats.at(stats_key(b, Site::X));
    const auto cm = sort_and_cluster(calib, d.n_heads, d.head_dim);
    double total = 0.0;
    for (std::size_t h = 0; h < d.n_heads; ++h) {
      std::vector<double> rank, v;
      for (std::size_t p = 0; p < d.head_dim; ++p) {
        rank.push_back(-static_cast<double>(p));
        v.push_back(held.channel_max[h * d.head_dim + cm.channel_perm[h][p]]);
      }
      total += spearman(rank, v);
    }
    EXPECT_GE(total / static_cast<double>(d.n_heads), 0.9) << "block " << b;
  }
}

TEST(SortAndCluster, RejectsBadInputs) {
  EXPECT_THROW(sort_and_cluster(stats_of({1, 2, 3}), 2, 2), Error);
  ClusterOptions o;
  o.m = 0;
  EXPECT_THROW(sort_and_cluster(stats_of({1, 2, 3, 4}), 2, 2, o), Error);
}

TEST(SortAndCluster, TiedMaximaFallBack) {
  const auto cm = sort_and_cluster(stats_of(std::vector<float>(16, 2.0f)), 4, 4, {2, 2});
  EXPECT_TRUE(cm.fallback);
  EXPECT_EQ(cm.m(), 2u);
  for (float s : cm.scales) EXPECT_FLOAT_EQ(s, 2.0f / 127);
}

TEST(ClusterMap, JsonRoundTrip) {
  const auto cm = oracle::random_cluster_map(8, 4, 3, 2, 5);
  const auto back = ClusterMap::from_json(cm.to_json());
  EXPECT_EQ(back.head_perm, cm.head_perm);
  EXPECT_EQ(back.channel_perm, cm.channel_perm);
  EXPECT_EQ(back.head_group_bounds, cm.head_group_bounds);
  EXPECT_EQ(back.channel_group_bounds, cm.channel_group_bounds);
  EXPECT_EQ(back.scales, cm.scales);
}

TEST(StateGroupScales, PerGroupExample) {
  const auto s = build_state_group_scales(stats_of({10, 3, 0.1f, 0.05f}), stats_of({1, 2, 4, 8}), 2, 2);
  EXPECT_EQ(s.boundaries, (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_FLOAT_EQ(s.scales_b[0], 10.0f / 127);
  EXPECT_FLOAT_EQ(s.scales_b[1], 0.1f / 127);
  EXPECT_FLOAT_EQ(s.scales_c[0], 2.0f / 127);
  EXPECT_FLOAT_EQ(s.scales_c[1], 8.0f / 127);
  EXPECT_THROW(build_state_group_scales(stats_of({1, 2}), stats_of({1, 2}), 2, 2), Error);
}

TEST(SiteScale, PercentileAndZero) {
  std::vector<float> v(1000);
  for (std::size_t i = 0; i < 1000; ++i) v[i] = static_cast<float>(i + 1);
  EXPECT_EQ(percentile_value(v, 99.9f), 999.0f);
  EXPECT_EQ(percentile_value(v, 100.0f), 1000.0f);
  EXPECT_EQ(percentile_value(v, 0.01f), 1.0f);
  EXPECT_THROW(percentile_value(v, 0.0f), Error);

  CalibStats s;
  s.observe(Tensor({1, 1000}, v), true);
  EXPECT_FLOAT_EQ(calibrate_site_scale(s, 8, 99.9f), 999.0f / 127);
  EXPECT_FLOAT_EQ(calibrate_site_scale(s, 8), 1000.0f / 127);
  CalibStats zero;
  zero.observe(Tensor({2, 4}));
  EXPECT_EQ(calibrate_site_scale(zero, 8), 1.0f);
}

TEST(StatsArchive, RoundTrip) {
  StatsMap m;
  m[stats_key(0, Site::X)] = stats_of({1, 2, 3});
  m[stats_key(1, Site::B)] = stats_of({0.5f});
  EXPECT_EQ(stats_from_archive(stats_to_archive(m)), m);
}

TEST(KMeans, SeparatedBlobs) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> n(0.0, 0.1);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({(i % 3) * 10.0 + n(gen), n(gen)});
  const auto r = kmeans(pts, 3, 1);
  for (int i = 3; i < 30; ++i) EXPECT_EQ(r.labels[static_cast<std::size_t>(i)], r.labels[static_cast<std::size_t>(i % 3)]);
  EXPECT_NE(r.labels[0], r.labels[1]);
  EXPECT_NE(r.labels[1], r.labels[2]);
  EXPECT_NEAR(r.sse, clustering_sse(pts, r.labels, 3), 1e-9);
  const auto again = kmeans(pts, 3, 1);
  EXPECT_EQ(again.labels, r.labels);
}

TEST(KMeans, MatchesExhaustiveTwoClustering) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({n(gen) + (i < 5 ? 6.0 : 0.0), n(gen)});
    const auto best = oracle::best_two_clustering(pts);
    const std::vector<std::size_t> ref(best.begin(), best.end());
    EXPECT_NEAR(kmeans(pts, 2, seed).sse, clustering_sse(pts, ref, 2), 1e-9);
  }
}

TEST(KMeans, SinglePointPerClusterAndOneCluster) {
  const std::vector<std::vector<double>> pts{{1.0}, {2.0}, {6.0}};
  const auto one = kmeans(pts, 1);
  EXPECT_NEAR(one.centroids[0][0], 3.0, 1e-12);
  EXPECT_NEAR(kmeans(pts, 3).sse, 0.0, 1e-12);
  EXPECT_THROW(kmeans(pts, 4), Error);
}
