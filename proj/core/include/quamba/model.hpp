#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quamba/archive.hpp"
#include "quamba/quantized_block.hpp"
#include "quamba/ssm_block.hpp"

namespace quamba {

struct ModelConfig {
  Variant variant = Variant::Mamba2;
  BlockDims dims;
  std::size_t n_blocks = 2;
  std::size_t vocab = 256;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// embedding → residual blocks (h += block(h)) → head. With hadamard_rotated the
// residual stream carries Ĥ·h: embedding rows and head are pre-rotated and
// every block has its in/out projections fused.
struct FloatModel {
  ModelConfig config;
  Tensor embedding;  // [vocab × d_model]
  std::vector<SsmBlockWeights> blocks;
  Tensor head;  // [vocab × d_model]
  bool hadamard_rotated = false;

  void validate() const;
};

using Tokens = std::vector<std::uint32_t>;

// Row r of a [batch × T] token tensor (ids stored as floats).
Tokens token_row(const Tensor& tokens, std::size_t r);

using ModelObserver = std::function<void(std::size_t block, Site, const Tensor&)>;

// Logits [T × vocab]. `residuals`, when given, receives the residual stream
// after each block in the model's own (possibly rotated) basis.
Tensor model_forward(const FloatModel& m, std::span<const std::uint32_t> tokens,
                     const ForwardOptions& opt = {}, const ModelObserver* observer = nullptr,
                     std::vector<Tensor>* residuals = nullptr);

// Rotates the residual stream by the normalized Hadamard matrix: embedding
// rows and head rows become e·Ĥᵀ, each block gets W_in·Ĥᵀ and Ĥ·W_out·Ĥᵀ and
// an online transform before out_proj. Logits are unchanged up to rounding.
FloatModel rotate_model_hadamard(const FloatModel& m);

struct QuantizedModel {
  ModelConfig config;
  Tensor embedding;  // dequantized (or float when embedding_bits == 16)
  Tensor head;
  std::optional<QTensor> embedding_q;
  std::optional<QTensor> head_q;
  std::vector<QuantizedBlock> blocks;
  bool hadamard_rotated = false;
  nlohmann::json pipeline = nlohmann::json::object();  // config echo

  std::vector<Profile> profiles() const;
  int embedding_bits() const { return embedding_q ? embedding_q->bits() : 16; }
  int head_bits() const { return head_q ? head_q->bits() : 16; }
};

struct QuantModelOptions {
  std::optional<std::vector<Profile>> profiles;  // per-block override
  bool quantize_cached_state = false;
  std::size_t ssd_chunk = 0;
};

Tensor quantized_model_forward(const QuantizedModel& m, std::span<const std::uint32_t> tokens,
                               const QuantModelOptions& opt = {},
                               std::vector<Tensor>* residuals = nullptr);

// Archive contract. Per block i, "blocks.<i>.<param>" for in_proj, x_proj,
// dt_proj, conv_weight, conv_bias, a_log, d_param, dt_bias, norm_weight and
// out_proj, plus "blocks.<i>.meta" (head_group, hadamard_fused,
// reorder_perm). Model-level: "embedding", "head", "model.config".
// Quantized archives store projections, embedding and head as QTensors and add
// "blocks.<i>.act_scales" and "blocks.<i>.info".
Archive float_model_to_archive(const FloatModel& m);
FloatModel float_model_from_archive(const Archive& a);
Archive quantized_model_to_archive(const QuantizedModel& m);
QuantizedModel quantized_model_from_archive(const Archive& a);
// "float" or "quantized".
std::string archive_model_format(const Archive& a);

bool is_quantized_archive(const Archive& a);

}  // namespace quamba
