#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "quamba/tensor.hpp"

namespace quamba {

enum class Variant { Mamba1, Mamba2 };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Block geometry. Mamba1 has no heads; n_heads × head_dim still tiles d_inner
// so the same head/channel clustering applies, and n_state_groups is 1.
struct BlockDims {
  std::size_t d_model = 64;
  std::size_t d_inner = 128;
  std::size_t d_state = 16;
  std::size_t n_heads = 8;
  std::size_t head_dim = 16;
  std::size_t n_state_groups = 2;
  std::size_t conv_kernel = 4;
  std::size_t dt_rank = 4;  // Mamba1 only

  static BlockDims defaults(Variant v);

  std::size_t bc_width() const { return n_state_groups * d_state; }
  std::size_t conv_channels(Variant v) const;
  // Units that own one Δ, A row, D and dt_bias: heads (Mamba2) or channels (Mamba1).
  std::size_t dt_units(Variant v) const;
  std::size_t in_proj_rows(Variant v) const;
  void validate(Variant v) const;

  nlohmann::json to_json() const;
  static BlockDims from_json(const nlohmann::json& j);
  bool operator==(const BlockDims&) const = default;
};

// Parameters of one block. In-projection rows are ordered (z, x, B, C, Δ) for
// Mamba2 and (z, x) for Mamba1, whose x_proj rows are ordered (Δ_low, B, C).
struct SsmBlockWeights {
  Variant variant = Variant::Mamba2;
  BlockDims dims;
  Tensor in_proj;      // [in_proj_rows × d_model]
  Tensor x_proj;       // Mamba1: [dt_rank + 2·d_state × d_inner]
  Tensor dt_proj;      // Mamba1: [d_inner × dt_rank]
  Tensor conv_weight;  // [conv_channels × conv_kernel]
  Tensor conv_bias;    // [conv_channels]
  Tensor a_log;        // Mamba2: [n_heads]; Mamba1: [d_inner × d_state]; A = -exp(a_log)
  Tensor d_param;      // [dt_units]
  Tensor dt_bias;      // [dt_units]
  Tensor norm_weight;  // [d_inner]
  Tensor out_proj;     // [d_model × d_inner]
  // State group of each head. Starts as h / (n_heads / n_state_groups) and is
  // permuted together with the heads by reordering.
  std::vector<std::size_t> head_group;
  // Set once the in_proj input side and both sides of out_proj carry Hadamard
  // matrices; the block then expects a rotated input and rotates online
  // before out_proj.
  bool hadamard_fused = false;
  // The x-channel permutation applied by reordering, if any.
  std::optional<std::vector<std::size_t>> reorder_perm;

  Tensor a() const;  // [dt_units × k], k = 1 (Mamba2) or d_state (Mamba1)
  void validate() const;
};

std::vector<std::size_t> default_head_groups(const BlockDims& dims, Variant v);

// Recurrent state carried between calls.
struct SsmState {
  Tensor h;           // [d_inner × d_state], channel c = head·head_dim + p
  Tensor conv_cache;  // [conv_channels × (conv_kernel − 1)], oldest column first
};

SsmState zero_state(const SsmBlockWeights& w);

// How channels map onto Δ/A/D units and B/C state groups.
struct ScanLayout {
  std::size_t head_dim = 1;
  std::size_t d_state = 1;
  bool per_channel_dt = false;
  std::vector<std::size_t> head_group;
};

ScanLayout scan_layout(const SsmBlockWeights& w);

struct Projections {
  Tensor z;       // [T × d_inner]
  Tensor x;       // [T × d_inner], before the convolution
  Tensor b, c;    // [T × bc_width] before the convolution (Mamba2); empty for Mamba1
  Tensor dt_raw;  // [T × n_heads] (Mamba2); empty for Mamba1
};

// Mamba2: one GEMM split into (z, x, B, C, Δ_raw). Mamba1: (z, x) only; B, C
// and Δ come from the convolved x through project_selective.
Projections project_inputs(const Tensor& u, const SsmBlockWeights& w);

struct SelectiveProjections {
  Tensor dt_low;  // [T × dt_rank]
  Tensor b, c;    // [T × d_state]
};
// Mamba1: x_proj applied to the convolved x.
SelectiveProjections project_selective(const Tensor& x, const SsmBlockWeights& w);

// Depthwise causal convolution followed by SiLU. When `cache` is given it
// supplies the K−1 previous inputs and is advanced past x.
Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                     Tensor* cache = nullptr);

struct Discretized {
  Tensor decay;  // Ȧ = exp(Δ·A): [T × units × k]
  Tensor dt;     // Δ = softplus(Δ_raw + dt_bias): [T × units]
};

Tensor compute_dt(const Tensor& dt_raw, const Tensor& dt_bias);
Tensor decay_from_dt(const Tensor& dt, const Tensor& a);
Discretized discretize(const Tensor& dt_raw, const Tensor& dt_bias, const Tensor& a);

struct ScanOutput {
  Tensor y;  // [T × d_inner], gated by SiLU(z) when z is given
  Tensor h;  // final state [d_inner × d_state]
};

struct ScanInputs {
  const Tensor& x;      // [T × d_inner]
  const Tensor& decay;  // [T × units × k]
  const Tensor& dt;     // [T × units]
  const Tensor& b;      // [T × groups·d_state]
  const Tensor& c;      // [T × groups·d_state]
  const Tensor& d;      // [units]
  const Tensor* z = nullptr;
};

// Sequential recurrence h_t = Ȧ_t h_{t−1} + Δ_t B_t x_t, y_t = C_t h_t + D x_t.
// `state_channel_max`, when given ([d_inner]), is raised to max_n |h_t| for every t.
ScanOutput selective_scan(const ScanInputs& in, const ScanLayout& layout,
                          const Tensor* h0 = nullptr, Tensor* state_channel_max = nullptr);

// Chunked evaluation: per chunk, an L×L decay-masked (C·Bᵀ) matrix applied to
// Δ·x, plus the carried state's contribution. Needs one decay per head (k = 1).
ScanOutput ssd_chunked(const ScanInputs& in, const ScanLayout& layout, std::size_t chunk,
                       const Tensor* h0 = nullptr);

Tensor rms_norm(const Tensor& y, const Tensor& weight, float eps = 1e-5f);

// Activation sites, in the order they occur in a block.
enum class Site { U, X, B, C, Z, Dt, DtLow, Y, State };
const char* site_name(Site s);
Site site_from_name(std::string_view name);

// Called with each site's float activation. Site::State receives the running
// per-channel max of |h| as [1 × d_inner].
using Observer = std::function<void(Site, const Tensor&)>;

struct ForwardOptions {
  std::size_t ssd_chunk = 0;  // 0: sequential selective scan
};

// project → conv → discretize → scan/SSD → gate → norm → (online Hadamard) → out_proj.
// With `state`, evaluation continues from it and leaves the final state behind.
Tensor block_forward_float(const Tensor& u, const SsmBlockWeights& w,
                           const ForwardOptions& opt = {}, SsmState* state = nullptr,
                           const Observer* observer = nullptr);

}  // namespace quamba
