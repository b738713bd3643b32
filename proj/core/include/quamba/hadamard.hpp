#pragma once

#include <optional>

#include "quamba/quantizer.hpp"
#include "quamba/tensor.hpp"

namespace quamba {

enum class HadamardNorm { None, InvSqrtN };

struct HadamardPlan {
  std::size_t n = 1;
  HadamardNorm normalize = HadamardNorm::InvSqrtN;
  std::optional<float> fused_output_scale;  // s_y for hadamard_quantize
  // Zero-pad inputs whose last dimension is shorter than n. The output keeps
  // the padded length n.
  bool allow_pad = false;

  static HadamardPlan normalized(std::size_t n) { return {n, HadamardNorm::InvSqrtN, {}, false}; }
  static HadamardPlan unnormalized(std::size_t n) { return {n, HadamardNorm::None, {}, false}; }
};

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// Dense Sylvester-ordered ±1 matrix H_n (entry (i, j) = (-1)^popcount(i & j)).
Tensor hadamard_matrix(std::size_t n);

// In-place Sylvester-ordered butterfly over one vector, unnormalized.
void fwht_inplace(std::span<float> v);

// Applies H_n along the last axis followed by the plan's normalization.
Tensor fwht(const Tensor& v, const HadamardPlan& plan);

// Normalized H_{d_out} · W · H_{d_in}ᵀ for W [d_out×d_in].
Tensor fuse_hadamard_out_proj(const Tensor& w_out, std::size_t n_in, std::size_t n_out);
// W · H_{d_in}ᵀ (normalized) for W [d_out×d_in].
Tensor fuse_hadamard_in_proj(const Tensor& w_in);

// quantize(fwht(y), per-tensor s_y, bits) in one pass: the butterfly output is
// scaled and rounded in the same loop, so no normalized float copy of y exists.
QTensor hadamard_quantize(const Tensor& y, const HadamardPlan& plan, int bits);

}  // namespace quamba
