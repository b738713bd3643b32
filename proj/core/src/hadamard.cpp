#include "quamba/hadamard.hpp"

#include <bit>
#include <cmath>

#include "quamba/error.hpp"

namespace quamba {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) { return n <= 1 ? 1 : std::bit_ceil(n); }

Tensor hadamard_matrix(std::size_t n) {
  QUAMBA_CHECK(is_power_of_two(n), "Hadamard size must be a power of two, got " +
                                       std::to_string(n));
  Tensor h({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      h.at(i, j) = (std::popcount(i & j) % 2 == 0) ? 1.0f : -1.0f;
  return h;
}

void fwht_inplace(std::span<float> v) {
  const std::size_t n = v.size();
  QUAMBA_CHECK(is_power_of_two(n), "fwht length must be a power of two, got " +
                                       std::to_string(n));
  for (std::size_t len = 1; len < n; len <<= 1) {
    for (std::size_t i = 0; i < n; i += len << 1) {
      for (std::size_t j = i; j < i + len; ++j) {
        const float a = v[j];
        const float b = v[j + len];
        v[j] = a + b;
        v[j + len] = a - b;
      }
    }
  }
}

namespace {

float norm_factor(const HadamardPlan& plan) {
  return plan.normalize == HadamardNorm::InvSqrtN
             ? static_cast<float>(1.0 / std::sqrt(static_cast<double>(plan.n)))
             : 1.0f;
}

// Copies each row of v into an n-wide scratch row, zero-padding if allowed.
Tensor padded_rows(const Tensor& v, const HadamardPlan& plan) {
  QUAMBA_CHECK(v.rank() >= 1, "fwht needs rank >= 1");
  QUAMBA_CHECK(is_power_of_two(plan.n), "Hadamard plan size must be a power of two, got " +
                                            std::to_string(plan.n));
  const std::size_t len = v.shape().back();
  if (len == plan.n) return v;
  QUAMBA_CHECK(plan.allow_pad && len < plan.n,
               "fwht last dimension " + std::to_string(len) + " does not match plan size " +
                   std::to_string(plan.n));
  Shape shape = v.shape();
  shape.back() = plan.n;
  Tensor out(shape);
  const std::size_t rows = v.numel() / std::max<std::size_t>(len, 1);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(v.data().begin() + static_cast<std::ptrdiff_t>(r * len), len,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * plan.n));
  return out;
}

}  // namespace

Tensor fwht(const Tensor& v, const HadamardPlan& plan) {
  Tensor out = padded_rows(v, plan);
  const std::size_t n = plan.n;
  const float f = norm_factor(plan);
  auto data = out.data();
  for (std::size_t off = 0; off < data.size(); off += n) {
    auto row = data.subspan(off, n);
    fwht_inplace(row);
    if (f != 1.0f)
      for (auto& x : row) x *= f;
  }
  return out;
}

Tensor fuse_hadamard_in_proj(const Tensor& w_in) {
  QUAMBA_CHECK(w_in.rank() == 2, "weights must be rank 2");
  // Rows of W·Hᵀ are H applied to rows of W (H is symmetric).
  return fwht(w_in, HadamardPlan::normalized(w_in.dim(1)));
}

Tensor fuse_hadamard_out_proj(const Tensor& w_out, std::size_t n_in, std::size_t n_out) {
  QUAMBA_CHECK(w_out.rank() == 2, "weights must be rank 2");
  QUAMBA_CHECK(w_out.dim(1) == n_in && w_out.dim(0) == n_out,
               "Hadamard sizes (" + std::to_string(n_out) + ", " + std::to_string(n_in) +
                   ") do not match weight " + shape_to_string(w_out.shape()));
  const Tensor right = fwht(w_out, HadamardPlan::normalized(n_in));              // W·Hᵀ
  const Tensor left = fwht(right.transposed(), HadamardPlan::normalized(n_out));  // (H·W·Hᵀ)ᵀ
  return left.transposed();
}

QTensor hadamard_quantize(const Tensor& y, const HadamardPlan& plan, int bits) {
  QUAMBA_CHECK(plan.fused_output_scale.has_value(), "hadamard_quantize needs a fused s_y");
  const float s_y = *plan.fused_output_scale;
  QUAMBA_CHECK(s_y > 0.0f, "fused output scale must be positive");
  check_bits(bits);
  Tensor work = padded_rows(y, plan);
  const std::size_t n = plan.n;
  const float f = norm_factor(plan);
  auto data = work.data();
  std::vector<std::int8_t> codes(data.size());
  for (std::size_t off = 0; off < data.size(); off += n) {
    auto row = data.subspan(off, n);
    fwht_inplace(row);
    for (std::size_t j = 0; j < n; ++j) {
      const float v = (f != 1.0f) ? row[j] * f : row[j];
      codes[off + j] = quantize_value(v, s_y, bits);
    }
  }
  return QTensor(work.shape(), bits, codes, ScaleLayout::per_tensor(s_y));
}

}  // namespace quamba
