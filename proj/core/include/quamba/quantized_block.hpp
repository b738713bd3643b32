#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "quamba/quantizer.hpp"
#include "quamba/ssm_block.hpp"

namespace quamba {

enum class Profile { W8A8, W4A8, W4A16 };

const char* profile_name(Profile p);
Profile profile_from_name(const std::string& name);
int weight_bits(Profile p);
bool quantizes_activations(Profile p);

// Static 8-bit activation scales of one block.
struct ActivationScales {
  ScaleLayout u;       // in_proj input, per-tensor
  ScaleLayout x;       // SSM input x: clustered (m×n) or per-tensor
  ScaleLayout b, c;    // per-state-group or per-tensor
  ScaleLayout z;       // per-tensor
  ScaleLayout dt;      // Δ after softplus, per-tensor
  ScaleLayout dt_low;  // Mamba1 dt_proj input, per-tensor
  float y_out = 1.0f;  // out_proj input; measured after the online Hadamard when fused
  std::optional<ScaleLayout> state;  // cached h [d_inner × d_state], clustered along axis 0

  nlohmann::json to_json() const;
  static ActivationScales from_json(const nlohmann::json& j);
};

struct QuantizedBlock {
  // Float parameters. The projection tensors hold the dequantized weights so
  // the forward pass evaluates exactly what the integer payload encodes.
  SsmBlockWeights base;
  QTensor in_proj;
  QTensor out_proj;
  std::optional<QTensor> x_proj;   // Mamba1
  std::optional<QTensor> dt_proj;  // Mamba1
  Profile profile = Profile::W4A16;
  std::optional<ActivationScales> act;
  nlohmann::json info = nlohmann::json::object();  // cluster map, state groups, reorder plan

  std::size_t storage_bytes() const;
};

// Assembles a block from quantized projections; fills base's projections with
// their dequantized values.
QuantizedBlock make_quantized_block(const SsmBlockWeights& w, QTensor in_proj, QTensor out_proj,
                                    std::optional<QTensor> x_proj, std::optional<QTensor> dt_proj,
                                    Profile profile, std::optional<ActivationScales> act);

struct QuantForwardOptions {
  std::optional<Profile> profile;  // overrides the block's own profile (same weights)
  bool quantize_cached_state = false;
  std::size_t ssd_chunk = 0;
};

// W4A16: dequantized weights in the float path. W8A8/W4A8: additionally
// quantizes u, x (clustered), B/C (per state group), z, Δ, and the out_proj
// input (Hadamard-quantized when fused); the scan runs in float on the
// dequantized operands and Ȧ is recomputed from the dequantized Δ.
Tensor block_forward_quantized(const Tensor& u, const QuantizedBlock& qb,
                               const QuantForwardOptions& opt = {}, SsmState* state = nullptr);

}  // namespace quamba
