#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace quamba {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, float value);
  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 helpers; rows() is the product of all leading dims.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;  // rank-2 only

  // Rows [begin, end) of a rank-2 tensor.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;
  // Columns [begin, end) of a rank-2 tensor.
  Tensor slice_cols(std::size_t begin, std::size_t end) const;

  bool all_finite() const;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Bitwise equality (distinguishes -0.0 from 0.0, treats identical NaN bits equal).
bool bit_equal(const Tensor& a, const Tensor& b);

// c = a · b with a [M×K], b [K×N]. Double accumulator, ascending k.
Tensor matmul(const Tensor& a, const Tensor& b);

// y = x · wᵀ with x [T×in], w [out×in]; the projection convention for weights.
Tensor linear(const Tensor& x, const Tensor& w);

// Concatenate rank-2 tensors along columns; all must share the row count.
Tensor concat_cols(std::span<const Tensor> parts);

// Concatenate rank-2 tensors along rows; all must share the column count.
Tensor concat_rows(std::span<const Tensor> parts);

float silu(float v);
float softplus(float v);

}  // namespace quamba
