#include "quamba/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "quamba/error.hpp"

namespace quamba {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0f) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  QUAMBA_CHECK(shape_numel(shape_) == data_.size(),
               "tensor data length " + std::to_string(data_.size()) +
                   " does not match shape " + shape_to_string(shape_));
}

Tensor Tensor::full(Shape shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    QUAMBA_CHECK(row.size() == c, "ragged rows in Tensor::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
  QUAMBA_CHECK(!shape_.empty(), "rows() on a rank-0 tensor");
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) n *= shape_[i];
  return n;
}

std::size_t Tensor::cols() const {
  QUAMBA_CHECK(!shape_.empty(), "cols() on a rank-0 tensor");
  return shape_.back();
}

Tensor Tensor::reshaped(Shape shape) const {
  QUAMBA_CHECK(shape_numel(shape) == data_.size(),
               "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
  QUAMBA_CHECK(rank() == 2, "transposed() needs a rank-2 tensor");
  const std::size_t r = shape_[0], c = shape_[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data_[j * r + i] = data_[i * c + j];
  return out;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  QUAMBA_CHECK(rank() == 2 && begin <= end && end <= shape_[0], "bad row slice");
  const std::size_t c = shape_[1];
  return Tensor({end - begin, c},
                std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                   data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::slice_cols(std::size_t begin, std::size_t end) const {
  QUAMBA_CHECK(rank() == 2 && begin <= end && end <= shape_[1], "bad column slice");
  const std::size_t r = shape_[0], c = shape_[1], w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(i * c + begin), w,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * w));
  return out;
}

bool Tensor::all_finite() const {
  for (float v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.numel() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(float)) == 0;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  QUAMBA_CHECK(a.rank() == 2 && b.rank() == 2, "matmul needs rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  QUAMBA_CHECK(b.dim(0) == k, "matmul shape mismatch: " + shape_to_string(a.shape()) +
                                  " · " + shape_to_string(b.shape()));
  Tensor c({m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk)
        acc += static_cast<double>(pa[i * k + kk]) * static_cast<double>(pb[kk * n + j]);
      pc[i * n + j] = static_cast<float>(acc);
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w) {
  QUAMBA_CHECK(x.rank() == 2 && w.rank() == 2, "linear needs rank-2 operands");
  const std::size_t t = x.dim(0), in = x.dim(1), out = w.dim(0);
  QUAMBA_CHECK(w.dim(1) == in, "linear shape mismatch: x " + shape_to_string(x.shape()) +
                                   ", w " + shape_to_string(w.shape()));
  Tensor y({t, out});
  const float* px = x.data().data();
  const float* pw = w.data().data();
  float* py = y.data().data();
  for (std::size_t i = 0; i < t; ++i) {
    const float* xr = px + i * in;
    for (std::size_t o = 0; o < out; ++o) {
      const float* wr = pw + o * in;
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k)
        acc += static_cast<double>(xr[k]) * static_cast<double>(wr[k]);
      py[i * out + o] = static_cast<float>(acc);
    }
  }
  return y;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  QUAMBA_CHECK(!parts.empty(), "concat_cols of nothing");
  const std::size_t r = parts[0].dim(0);
  std::size_t c = 0;
  for (const auto& p : parts) {
    QUAMBA_CHECK(p.rank() == 2 && p.dim(0) == r, "concat_cols row mismatch");
    c += p.dim(1);
  }
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      auto src = p.row(i);
      std::copy(src.begin(), src.end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(off));
      off += p.dim(1);
    }
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  QUAMBA_CHECK(!parts.empty(), "concat_rows of nothing");
  const std::size_t c = parts[0].dim(1);
  std::size_t r = 0;
  for (const auto& p : parts) {
    QUAMBA_CHECK(p.rank() == 2 && p.dim(1) == c, "concat_rows column mismatch");
    r += p.dim(0);
  }
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor({r, c}, std::move(data));
}

float silu(float v) { return v / (1.0f + std::exp(-v)); }

float softplus(float v) {
  // log1p(exp(v)) without overflow for large v.
  if (v > 20.0f) return v;
  return std::log1p(std::exp(v));
}

}  // namespace quamba
