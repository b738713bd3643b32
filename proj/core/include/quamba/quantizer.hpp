#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "quamba/archive.hpp"
#include "quamba/tensor.hpp"

namespace quamba {

// Largest representable magnitude for a signed symmetric grid: 2^(bits-1) - 1.
int qmax_for_bits(int bits);
void check_bits(int bits);

enum class LayoutKind {
  PerTensor,      // one scale
  PerChannel,     // one scale per coordinate along `axis`
  PerGroup,       // contiguous runs of `group_size` along `axis`, per remaining coordinate
  PerRow,         // one scale per row (all leading dims flattened)
  Clustered,      // coordinate along `axis` -> scale via `index_map`
  PerStateGroup,  // last axis partitioned by `boundaries`
};

const char* layout_kind_name(LayoutKind k);
LayoutKind layout_kind_from_name(const std::string& name);

// Where each element's scale lives. Constructed without scales, then filled
// either explicitly or by fit_scales().
struct ScaleLayout {
  LayoutKind kind = LayoutKind::PerTensor;
  std::size_t axis = 0;
  std::size_t group_size = 0;
  std::vector<std::size_t> boundaries;
  std::vector<std::uint32_t> index_map;
  std::vector<float> scales;

  static ScaleLayout per_tensor(float scale = 1.0f);
  static ScaleLayout per_channel(std::size_t axis);
  static ScaleLayout per_group(std::size_t axis, std::size_t group_size);
  static ScaleLayout per_row();
  static ScaleLayout clustered(std::size_t axis, std::vector<std::uint32_t> index_map,
                               std::vector<float> scales = {});
  static ScaleLayout per_state_group(std::vector<std::size_t> boundaries);

  // Number of scales a tensor of `shape` needs under this layout.
  std::size_t scale_count(const Shape& shape) const;
  // Scale index of every element (row-major).
  std::vector<std::uint32_t> element_scale_indices(const Shape& shape) const;
  // Throws unless the layout covers `shape` and every scale is positive.
  void validate(const Shape& shape) const;

  // Descriptor without the scales array.
  nlohmann::json descriptor() const;
  static ScaleLayout from_descriptor(const nlohmann::json& j, std::vector<float> scales);
};

// Symmetric step size max/qmax from an observed absolute maximum; 1.0 when max is zero.
float scale_from_max(float abs_max, int bits);

// max|x| / (2^(bits-1) - 1), or 1.0 for an all-zero slice.
float compute_scale(std::span<const float> x_slice, int bits);

// Fills layout.scales from the per-scale absolute maxima of x.
ScaleLayout fit_scales(const Tensor& x, ScaleLayout layout, int bits);

// Quantized integer payload plus its scale layout. 8-bit codes are stored as
// one byte each; 4-bit codes are nibble-packed.
class QTensor {
 public:
  QTensor() = default;
  QTensor(Shape shape, int bits, std::span<const std::int8_t> codes, ScaleLayout layout);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return shape_numel(shape_); }
  int bits() const { return bits_; }
  const ScaleLayout& layout() const { return layout_; }

  std::int8_t code(std::size_t i) const;
  std::vector<std::int8_t> codes() const;
  std::span<const std::uint8_t> payload() const { return payload_; }

  // Payload plus float32 scales.
  std::size_t storage_bytes() const;

 private:
  Shape shape_;
  int bits_ = 8;
  std::vector<std::uint8_t> payload_;
  ScaleLayout layout_;
};

// code = clamp(round_half_even(x / s), -2^(bits-1), 2^(bits-1) - 1)
QTensor quantize(const Tensor& x, const ScaleLayout& layout, int bits);
Tensor dequantize(const QTensor& q);

// quantize then dequantize in one go.
Tensor fake_quantize(const Tensor& x, const ScaleLayout& layout, int bits);

std::int8_t quantize_value(float x, float scale, int bits);

// s_x / s_y; the requantization multiplier of an integer GEMM is s_w · s_fused.
float fuse_scales(float s_x, float s_w, float s_y);

// Integer GEMM y = x · wᵀ with int32 accumulation and the output requantized
// to `out_bits` at per-tensor scale s_y. x must be per-tensor; w per-tensor or
// per-channel along its output axis.
QTensor quantized_linear(const QTensor& x, const QTensor& w, float s_y, int out_bits);

// Archive layout for a QTensor named N: N (i8 | u4packed), N.scales (f32),
// N.layout (json-meta descriptor incl. bits).
void put_qtensor(Archive& archive, const std::string& name, const QTensor& q);
QTensor get_qtensor(const Archive& archive, const std::string& name);

}  // namespace quamba
