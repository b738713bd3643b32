#include "quamba/gptq.hpp"

#include <cmath>
#include <optional>
#include <vector>

#include "quamba/error.hpp"

namespace quamba {

namespace {

using Matrix = std::vector<double>;  // square, row-major

// Lower Cholesky factor of a symmetric matrix; nullopt unless positive definite.
std::optional<Matrix> cholesky_lower(const Matrix& a, std::size_t n) {
  Matrix l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return l;
}

// (L·Lᵀ)⁻¹ from the lower factor.
Matrix inverse_from_cholesky(const Matrix& l, std::size_t n) {
  // Solve L·Y = I, then Lᵀ·X = Y column by column.
  Matrix inv(n * n, 0.0);
  std::vector<double> y(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = (i == c) ? 1.0 : 0.0;
      for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * y[k];
      y[i] = s / l[i * n + i];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = y[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * inv[k * n + c];
      inv[ii * n + c] = s / l[ii * n + ii];
    }
  }
  return inv;
}

std::size_t group_count(std::size_t in, std::size_t g) { return (in + g - 1) / g; }

}  // namespace

QTensor rtn_quantize_weight(const Tensor& w, int bits, std::size_t group_size) {
  QUAMBA_CHECK(w.rank() == 2, "weights must be rank 2");
  auto layout = fit_scales(w, ScaleLayout::per_group(1, group_size), bits);
  return quantize(w, layout, bits);
}

GptqResult gptq_quantize_weight(const Tensor& w, const Tensor& calib_inputs,
                                const GptqOptions& opt) {
  QUAMBA_CHECK(w.rank() == 2 && calib_inputs.rank() == 2, "GPTQ needs rank-2 operands");
  const std::size_t out = w.dim(0), in = w.dim(1);
  QUAMBA_CHECK(calib_inputs.dim(1) == in, "calibration width " +
                                              std::to_string(calib_inputs.dim(1)) +
                                              " != weight input dim " + std::to_string(in));
  QUAMBA_CHECK(calib_inputs.dim(0) >= 1, "GPTQ needs at least one calibration sample");
  QUAMBA_CHECK(opt.group_size > 0, "group_size must be positive");
  check_bits(opt.bits);

  // H = 2 XᵀX
  const std::size_t samples = calib_inputs.dim(0);
  Matrix h(in * in, 0.0);
  const auto x = calib_inputs.data();
  for (std::size_t s = 0; s < samples; ++s) {
    const float* row = x.data() + s * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      for (std::size_t j = 0; j < in; ++j) h[i * in + j] += 2.0 * xi * row[j];
    }
  }

  // Working copy of the weights in double; dead inputs cannot be corrected for.
  Matrix wk(out * in);
  for (std::size_t i = 0; i < out * in; ++i) wk[i] = w.data()[i];
  for (std::size_t i = 0; i < in; ++i) {
    if (h[i * in + i] == 0.0) {
      h[i * in + i] = 1.0;
      for (std::size_t r = 0; r < out; ++r) wk[r * in + i] = 0.0;
    }
  }
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < in; ++i) mean_diag += h[i * in + i];
  mean_diag /= static_cast<double>(in);
  const double damp = static_cast<double>(opt.damp_ratio) * mean_diag;
  for (std::size_t i = 0; i < in; ++i) h[i * in + i] += damp;

  auto l = cholesky_lower(h, in);
  std::optional<Matrix> u_inv;  // upper factor U of H⁻¹ = UᵀU
  if (l) {
    const Matrix hinv = inverse_from_cholesky(*l, in);
    if (auto li = cholesky_lower(hinv, in)) {
      Matrix u(in * in, 0.0);
      for (std::size_t i = 0; i < in; ++i)
        for (std::size_t j = 0; j < in; ++j) u[i * in + j] = (*li)[j * in + i];
      u_inv = std::move(u);
    }
  }
  if (!u_inv) return {rtn_quantize_weight(w, opt.bits, opt.group_size), true};
  const Matrix& u = *u_inv;

  const std::size_t g = opt.group_size;
  const std::size_t groups = group_count(in, g);
  std::vector<float> scales(out * groups, 1.0f);
  std::vector<std::int8_t> codes(out * in);
  std::vector<float> slice;
  for (std::size_t col = 0; col < in; ++col) {
    const std::size_t grp = col / g;
    if (col % g == 0) {
      const std::size_t end = std::min(in, col + g);
      for (std::size_t r = 0; r < out; ++r) {
        slice.assign(end - col, 0.0f);
        for (std::size_t c = col; c < end; ++c)
          slice[c - col] = static_cast<float>(wk[r * in + c]);
        scales[r * groups + grp] = compute_scale(slice, opt.bits);
      }
    }
    const double d = u[col * in + col];
    for (std::size_t r = 0; r < out; ++r) {
      const float s = scales[r * groups + grp];
      const float wv = static_cast<float>(wk[r * in + col]);
      const std::int8_t q = quantize_value(wv, s, opt.bits);
      codes[r * in + col] = q;
      const double err = (wk[r * in + col] - static_cast<double>(q) * s) / d;
      for (std::size_t c = col + 1; c < in; ++c) wk[r * in + c] -= err * u[col * in + c];
    }
  }

  auto layout = ScaleLayout::per_group(1, g);
  layout.scales = std::move(scales);
  return {QTensor(w.shape(), opt.bits, codes, std::move(layout)), false};
}

double gptq_proxy_loss(const Tensor& w, const Tensor& w_hat, const Tensor& calib_inputs) {
  QUAMBA_CHECK(w.shape() == w_hat.shape(), "proxy loss needs matching weights");
  const Tensor a = linear(calib_inputs, w);
  const Tensor b = linear(calib_inputs, w_hat);
  double loss = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    loss += d * d;
  }
  return loss;
}

}  // namespace quamba
