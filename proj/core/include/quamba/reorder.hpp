#pragma once

#include <vector>

#include <json.hpp>

#include "quamba/calibrate.hpp"
#include "quamba/ssm_block.hpp"

namespace quamba {

// x-channel permutation over d_inner: perm[new channel] = old channel.
struct ReorderPlan {
  std::vector<std::size_t> perm;

  bool is_identity() const;
  ReorderPlan inverse() const;
  nlohmann::json to_json() const;
  static ReorderPlan from_json(const nlohmann::json& j);
};

// perm[h'·head_dim + p'] = head_perm[h']·head_dim + channel_perm[head_perm[h']][p'].
ReorderPlan build_reorder_plan(const ClusterMap& cmap, const BlockDims& dims);

// Rewrites every x-channel-indexed parameter so the block computes the same
// function while its internal x, z and y appear in plan order: in_proj z/x
// rows, conv x channels, norm, out_proj columns, plus per-head A, D, dt_bias,
// Δ rows and head groups (Mamba2) or x_proj columns, dt_proj rows and the
// per-channel A, D, dt_bias (Mamba1). Throws when the block is already
// reordered or Hadamard-fused.
SsmBlockWeights apply_reorder(const SsmBlockWeights& w, const ReorderPlan& plan);

// Undoes apply_reorder using the recorded permutation.
SsmBlockWeights invert_reorder(const SsmBlockWeights& w);

}  // namespace quamba
