#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"
#include "quamba/calibrate.hpp"
#include "quamba/error.hpp"
#include "quamba/hadamard.hpp"
#include "quamba/reorder.hpp"
#include "quamba/toy_model.hpp"

using namespace quamba;

namespace {

BlockDims dims_for(Variant v) {
  BlockDims d;
  d.d_model = 16;
  d.d_inner = 32;
  d.d_state = 4;
  d.n_heads = 4;
  d.head_dim = 8;
  d.n_state_groups = v == Variant::Mamba2 ? 2 : 1;
  d.dt_rank = 3;
  return d;
}

bool weights_bit_equal(const SsmBlockWeights& a, const SsmBlockWeights& b) {
  return bit_equal(a.in_proj, b.in_proj) && bit_equal(a.x_proj, b.x_proj) && bit_equal(a.dt_proj, b.dt_proj) &&
         bit_equal(a.conv_weight, b.conv_weight) && bit_equal(a.conv_bias, b.conv_bias) &&
         bit_equal(a.a_log, b.a_log) && bit_equal(a.d_param, b.d_param) && bit_equal(a.dt_bias, b.dt_bias) &&
         bit_equal(a.norm_weight, b.norm_weight) && bit_equal(a.out_proj, b.out_proj) &&
         a.head_group == b.head_group;
}

}  // namespace

TEST(BuildReorderPlan, IdentityMap) {
  const auto d = dims_for(Variant::Mamba2);
  const auto plan = build_reorder_plan(ClusterMap::identity(4, 8), d);
  EXPECT_TRUE(plan.is_identity());
  std::vector<std::size_t> iota(32);
  std::iota(iota.begin(), iota.end(), 0);
  EXPECT_EQ(plan.perm, iota);
}

TEST(BuildReorderPlan, HeadAndChannelSwap) {
  BlockDims d = dims_for(Variant::Mamba2);
  d.d_inner = 4;
  d.n_heads = 2;
  d.head_dim = 2;
  ClusterMap cm = ClusterMap::identity(2, 2);
  cm.head_perm = {1, 0};
  cm.channel_perm = {{1, 0}, {1, 0}};
  EXPECT_EQ(build_reorder_plan(cm, d).perm, (std::vector<std::size_t>{3, 2, 1, 0}));
  EXPECT_THROW(build_reorder_plan(ClusterMap::identity(4, 8), d), Error);
}

TEST(BuildReorderPlan, InverseComposesToIdentity) {
  const auto d = dims_for(Variant::Mamba2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto plan = build_reorder_plan(oracle::random_cluster_map(4, 8, 2, 3, seed), d);
    const auto inv = plan.inverse();
    for (std::size_t i = 0; i < 32; ++i) {
      EXPECT_EQ(plan.perm[inv.perm[i]], i);
      EXPECT_EQ(inv.perm[plan.perm[i]], i);
    }
    EXPECT_EQ(ReorderPlan::from_json(plan.to_json()).perm, plan.perm);
  }
}

TEST(ApplyReorder, IdentityLeavesWeightsUnchanged) {
  const auto w = oracle::random_block(Variant::Mamba2, dims_for(Variant::Mamba2), 1);
  const auto r = apply_reorder(w, build_reorder_plan(ClusterMap::identity(4, 8), w.dims));
  EXPECT_TRUE(weights_bit_equal(r, w));
}

TEST(ApplyReorder, MatchesOraclePermutation) {
  for (Variant v : {Variant::Mamba1, Variant::Mamba2}) {
    const auto w = oracle::random_block(v, dims_for(v), 2);
    const auto plan = build_reorder_plan(oracle::random_cluster_map(4, 8, 2, 2, 3), w.dims);
    EXPECT_TRUE(weights_bit_equal(apply_reorder(w, plan), oracle::permute_channels(w, plan.perm)))
        << variant_name(v);
  }
}

TEST(ApplyReorder, ComputeInvariance) {
  for (Variant v : {Variant::Mamba1, Variant::Mamba2}) {
    const auto w = oracle::random_block(v, dims_for(v), 4);
    const Tensor u = oracle::random_tensor({24, 16}, 5);
    const Tensor ref = block_forward_float(u, w);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto cm = oracle::random_cluster_map(4, 8, 1 + seed % 4, 1 + seed % 5, seed);
      const auto r = apply_reorder(w, build_reorder_plan(cm, w.dims));
      EXPECT_LE(oracle::max_rel(block_forward_float(u, r), ref), 1e-5) << variant_name(v) << " seed " << seed;
    }
  }
}

TEST(ApplyReorder, InverseIsBitExact) {
  for (Variant v : {Variant::Mamba1, Variant::Mamba2}) {
    const auto w = oracle::random_block(v, dims_for(v), 6);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto r = apply_reorder(w, build_reorder_plan(oracle::random_cluster_map(4, 8, 2, 2, seed), w.dims));
      ASSERT_TRUE(r.reorder_perm.has_value());
      const auto back = invert_reorder(r);
      EXPECT_TRUE(weights_bit_equal(back, w));
      EXPECT_FALSE(back.reorder_perm.has_value());
    }
  }
}

TEST(ApplyReorder, RejectsDoubleApplicationAndFusedBlocks) {
  const auto w = oracle::random_block(Variant::Mamba2, dims_for(Variant::Mamba2), 7);
  const auto plan = build_reorder_plan(oracle::random_cluster_map(4, 8, 2, 2, 1), w.dims);
  const auto once = apply_reorder(w, plan);
  EXPECT_THROW(apply_reorder(once, plan), Error);
  EXPECT_THROW(invert_reorder(w), Error);
  auto fused = w;
  fused.hadamard_fused = true;
  EXPECT_THROW(apply_reorder(fused, plan), Error);
  ReorderPlan bad{{0, 0, 1}};
  EXPECT_THROW(apply_reorder(w, bad), Error);
  // A Mamba2 plan must keep each head's channels together.
  ReorderPlan split = plan;
  std::swap(split.perm[0], split.perm[31]);
  EXPECT_THROW(apply_reorder(w, split), Error);
}

TEST(ApplyReorder, RecalibrationIsSortedAndLeavesBcAlone) {
  const FloatModel m = generate_toy_model(ToyConfig{});
  const Tensor tok = generate_tokens(m.config.vocab, 4, 32, 1);
  const auto before = collect_stats(m, tok).stats;
  const auto& d = m.config.dims;
  FloatModel r = m;
  for (std::size_t b = 0; b < m.config.n_blocks; ++b) {
    const auto cm = sort_and_cluster(before.at(stats_key(b, Site::X)), d.n_heads, d.head_dim);
    r.blocks[b] = apply_reorder(m.blocks[b], build_reorder_plan(cm, d));
  }
  const auto after = collect_stats(r, tok).stats;
  for (std::size_t b = 0; b < m.config.n_blocks; ++b) {
    const auto& x = after.at(stats_key(b, Site::X)).channel_max;
    for (std::size_t h = 0; h < d.n_heads; ++h)
      for (std::size_t p = 1; p < d.head_dim; ++p)
        EXPECT_GE(x[h * d.head_dim + p - 1], x[h * d.head_dim + p]) << "block " << b << " head " << h;
    for (Site s : {Site::B, Site::C, Site::U})
      EXPECT_EQ(after.at(stats_key(b, s)), before.at(stats_key(b, s))) << site_name(s);
  }
}
