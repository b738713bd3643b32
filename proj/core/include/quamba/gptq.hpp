#pragma once

#include "quamba/quantizer.hpp"
#include "quamba/tensor.hpp"

namespace quamba {

struct GptqOptions {
  int bits = 4;
  std::size_t group_size = 32;  // columns per scale group; last group may be short
  float damp_ratio = 0.01f;     // damp = damp_ratio · mean(diag(H))
};

struct GptqResult {
  QTensor weight;         // PerGroup(axis=1, group_size) layout
  bool fell_back = false;  // Hessian not positive definite after damping; RTN used
};

// Round-to-nearest with per-row, per-group scales: the GPTQ baseline.
QTensor rtn_quantize_weight(const Tensor& w, int bits, std::size_t group_size);

// Quantizes w [out×in] column by column, pushing each column's rounding error
// onto the not-yet-quantized columns through the upper Cholesky factor of
// H⁻¹, H = 2·XᵀX + damp·I with X = calib_inputs [samples×in]. Group scales are
// taken from the error-updated weights when each group starts.
GptqResult gptq_quantize_weight(const Tensor& w, const Tensor& calib_inputs,
                                const GptqOptions& opt = {});

// ‖X·Wᵀ − X·Ŵᵀ‖²_F, the layer-wise objective GPTQ minimizes.
double gptq_proxy_loss(const Tensor& w, const Tensor& w_hat, const Tensor& calib_inputs);

}  // namespace quamba
