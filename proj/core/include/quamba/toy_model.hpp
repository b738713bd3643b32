#pragma once

#include <cstdint>

#include <json.hpp>

#include "quamba/model.hpp"

namespace quamba {

struct ToyConfig {
  Variant variant = Variant::Mamba2;
  BlockDims dims = BlockDims::defaults(Variant::Mamba2);
  std::size_t n_blocks = 2;
  std::size_t vocab = 256;
  std::uint64_t seed = 0;
  // Spread of the x channels: head factors are log-uniform in [1, head_spread]
  // and each channel adds a lognormal factor with this sigma.
  double head_spread = 10.0;
  double channel_sigma = 0.7;
  // Ratio between the largest and smallest B/C state-group scale.
  double state_group_spread = 60.0;
  std::size_t norm_outliers = 3;
  double norm_outlier_gain = 8.0;
  // Sparse spikes in in_proj/out_proj weights.
  double weight_outlier_frac = 0.01;
  double weight_outlier_gain = 10.0;
  // Residual branch gain: each block's output RMS relative to its input RMS.
  double block_gain = 0.5;

  nlohmann::json to_json() const;
  static ToyConfig from_json(const nlohmann::json& j);
};

FloatModel generate_toy_model(const ToyConfig& cfg);

// Uniform token ids, [batch × T].
Tensor generate_tokens(std::size_t vocab, std::size_t batch, std::size_t seq_len,
                       std::uint64_t seed);

// Four Mamba2 blocks where block `sensitive` has extreme gate outliers and a
// larger residual gain, so 8-bit activations hurt it most.
FloatModel sensitive_block_fixture(std::uint64_t seed, std::size_t sensitive = 2);

}  // namespace quamba
