#include "quamba/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "quamba/error.hpp"
#include "quamba/int4.hpp"

namespace quamba {

using nlohmann::json;

void check_bits(int bits) {
  QUAMBA_CHECK(bits == 4 || bits == 8, "bits must be 4 or 8, got " + std::to_string(bits));
}

int qmax_for_bits(int bits) {
  check_bits(bits);
  return (1 << (bits - 1)) - 1;
}

const char* layout_kind_name(LayoutKind k) {
  switch (k) {
    case LayoutKind::PerTensor: return "per_tensor";
    case LayoutKind::PerChannel: return "per_channel";
    case LayoutKind::PerGroup: return "per_group";
    case LayoutKind::PerRow: return "per_row";
    case LayoutKind::Clustered: return "clustered";
    case LayoutKind::PerStateGroup: return "per_state_group";
  }
  return "?";
}

LayoutKind layout_kind_from_name(const std::string& name) {
  for (auto k : {LayoutKind::PerTensor, LayoutKind::PerChannel, LayoutKind::PerGroup,
                 LayoutKind::PerRow, LayoutKind::Clustered, LayoutKind::PerStateGroup})
    if (name == layout_kind_name(k)) return k;
  throw Error("unknown scale layout kind '" + name + "'");
}

ScaleLayout ScaleLayout::per_tensor(float scale) {
  ScaleLayout l;
  l.kind = LayoutKind::PerTensor;
  l.scales = {scale};
  return l;
}

ScaleLayout ScaleLayout::per_channel(std::size_t axis) {
  ScaleLayout l;
  l.kind = LayoutKind::PerChannel;
  l.axis = axis;
  return l;
}

ScaleLayout ScaleLayout::per_group(std::size_t axis, std::size_t group_size) {
  QUAMBA_CHECK(group_size > 0, "group_size must be positive");
  ScaleLayout l;
  l.kind = LayoutKind::PerGroup;
  l.axis = axis;
  l.group_size = group_size;
  return l;
}

ScaleLayout ScaleLayout::per_row() {
  ScaleLayout l;
  l.kind = LayoutKind::PerRow;
  return l;
}

ScaleLayout ScaleLayout::clustered(std::size_t axis, std::vector<std::uint32_t> index_map,
                                   std::vector<float> scales) {
  ScaleLayout l;
  l.kind = LayoutKind::Clustered;
  l.axis = axis;
  l.index_map = std::move(index_map);
  l.scales = std::move(scales);
  return l;
}

ScaleLayout ScaleLayout::per_state_group(std::vector<std::size_t> boundaries) {
  ScaleLayout l;
  l.kind = LayoutKind::PerStateGroup;
  l.boundaries = std::move(boundaries);
  return l;
}

namespace {

struct AxisInfo {
  std::size_t dim;     // extent of the axis
  std::size_t stride;  // product of dims after the axis
};

AxisInfo axis_info(const Shape& shape, std::size_t axis) {
  QUAMBA_CHECK(axis < shape.size(), "layout axis " + std::to_string(axis) +
                                        " out of range for shape " + shape_to_string(shape));
  std::size_t stride = 1;
  for (std::size_t i = axis + 1; i < shape.size(); ++i) stride *= shape[i];
  return {shape[axis], stride};
}

}  // namespace

std::size_t ScaleLayout::scale_count(const Shape& shape) const {
  QUAMBA_CHECK(!shape.empty(), "scale layouts need rank >= 1");
  const std::size_t n = shape_numel(shape);
  switch (kind) {
    case LayoutKind::PerTensor: return 1;
    case LayoutKind::PerChannel: return axis_info(shape, axis).dim;
    case LayoutKind::PerGroup: {
      const auto a = axis_info(shape, axis);
      const std::size_t groups = (a.dim + group_size - 1) / group_size;
      return a.dim ? (n / a.dim) * groups : 0;
    }
    case LayoutKind::PerRow: return n / shape.back();
    case LayoutKind::Clustered: {
      const auto a = axis_info(shape, axis);
      QUAMBA_CHECK(index_map.size() == a.dim, "clustered index_map length " +
                                                  std::to_string(index_map.size()) +
                                                  " != axis extent " + std::to_string(a.dim));
      std::uint32_t mx = 0;
      for (auto v : index_map) mx = std::max(mx, v);
      return index_map.empty() ? 0 : std::max<std::size_t>(mx + 1, scales.size());
    }
    case LayoutKind::PerStateGroup: {
      QUAMBA_CHECK(boundaries.size() >= 2 && boundaries.front() == 0 &&
                       boundaries.back() == shape.back(),
                   "state-group boundaries must span the last axis [0, " +
                       std::to_string(shape.back()) + "]");
      for (std::size_t i = 1; i < boundaries.size(); ++i)
        QUAMBA_CHECK(boundaries[i] > boundaries[i - 1],
                     "state-group boundaries must be strictly increasing");
      return boundaries.size() - 1;
    }
  }
  return 0;
}

std::vector<std::uint32_t> ScaleLayout::element_scale_indices(const Shape& shape) const {
  const std::size_t n = shape_numel(shape);
  scale_count(shape);  // shape/layout consistency checks
  std::vector<std::uint32_t> idx(n, 0);
  switch (kind) {
    case LayoutKind::PerTensor:
      break;
    case LayoutKind::PerChannel: {
      const auto a = axis_info(shape, axis);
      for (std::size_t i = 0; i < n; ++i)
        idx[i] = static_cast<std::uint32_t>((i / a.stride) % a.dim);
      break;
    }
    case LayoutKind::PerGroup: {
      const auto a = axis_info(shape, axis);
      const std::size_t groups = (a.dim + group_size - 1) / group_size;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t coord = (i / a.stride) % a.dim;
        const std::size_t outer = (i / (a.stride * a.dim)) * a.stride + i % a.stride;
        idx[i] = static_cast<std::uint32_t>(outer * groups + coord / group_size);
      }
      break;
    }
    case LayoutKind::PerRow: {
      const std::size_t c = shape.back();
      for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i / c);
      break;
    }
    case LayoutKind::Clustered: {
      const auto a = axis_info(shape, axis);
      for (std::size_t i = 0; i < n; ++i) idx[i] = index_map[(i / a.stride) % a.dim];
      break;
    }
    case LayoutKind::PerStateGroup: {
      const std::size_t c = shape.back();
      std::vector<std::uint32_t> group_of(c);
      for (std::size_t g = 0; g + 1 < boundaries.size(); ++g)
        for (std::size_t j = boundaries[g]; j < boundaries[g + 1]; ++j)
          group_of[j] = static_cast<std::uint32_t>(g);
      for (std::size_t i = 0; i < n; ++i) idx[i] = group_of[i % c];
      break;
    }
  }
  return idx;
}

void ScaleLayout::validate(const Shape& shape) const {
  const std::size_t want = scale_count(shape);
  QUAMBA_CHECK(scales.size() == want, std::string("layout ") + layout_kind_name(kind) +
                                          " expects " + std::to_string(want) +
                                          " scales for shape " + shape_to_string(shape) +
                                          ", has " + std::to_string(scales.size()));
  for (float s : scales)
    QUAMBA_CHECK(std::isfinite(s) && s > 0.0f, "scales must be finite and > 0");
}

json ScaleLayout::descriptor() const {
  json j = {{"kind", layout_kind_name(kind)}};
  if (kind == LayoutKind::PerChannel || kind == LayoutKind::PerGroup ||
      kind == LayoutKind::Clustered)
    j["axis"] = axis;
  if (kind == LayoutKind::PerGroup) j["group_size"] = group_size;
  if (kind == LayoutKind::PerStateGroup) j["boundaries"] = boundaries;
  if (kind == LayoutKind::Clustered) j["index_map"] = index_map;
  return j;
}

ScaleLayout ScaleLayout::from_descriptor(const json& j, std::vector<float> scales) {
  ScaleLayout l;
  l.kind = layout_kind_from_name(j.at("kind").get<std::string>());
  l.axis = j.value("axis", std::size_t{0});
  l.group_size = j.value("group_size", std::size_t{0});
  if (j.contains("boundaries")) l.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
  if (j.contains("index_map")) l.index_map = j.at("index_map").get<std::vector<std::uint32_t>>();
  l.scales = std::move(scales);
  return l;
}

float scale_from_max(float abs_max, int bits) {
  QUAMBA_CHECK(std::isfinite(abs_max), "non-finite input to scale computation");
  if (abs_max == 0.0f) return 1.0f;
  return abs_max / static_cast<float>(qmax_for_bits(bits));
}

float compute_scale(std::span<const float> x_slice, int bits) {
  float mx = 0.0f;
  for (float v : x_slice) {
    QUAMBA_CHECK(std::isfinite(v), "non-finite input to compute_scale");
    mx = std::max(mx, std::fabs(v));
  }
  return scale_from_max(mx, bits);
}

ScaleLayout fit_scales(const Tensor& x, ScaleLayout layout, int bits) {
  if (layout.kind == LayoutKind::Clustered) layout.scales.clear();
  const auto idx = layout.element_scale_indices(x.shape());
  std::vector<float> maxima(layout.scale_count(x.shape()), 0.0f);
  const auto data = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    QUAMBA_CHECK(std::isfinite(data[i]), "non-finite input to fit_scales");
    maxima[idx[i]] = std::max(maxima[idx[i]], std::fabs(data[i]));
  }
  layout.scales.resize(maxima.size());
  for (std::size_t i = 0; i < maxima.size(); ++i) layout.scales[i] = scale_from_max(maxima[i], bits);
  return layout;
}

std::int8_t quantize_value(float x, float scale, int bits) {
  const int qmax = qmax_for_bits(bits);
  // nearbyint under the default FE_TONEAREST mode rounds half to even.
  const float r = std::nearbyint(x / scale);
  const float c = std::clamp(r, static_cast<float>(-qmax - 1), static_cast<float>(qmax));
  return static_cast<std::int8_t>(c);
}

QTensor::QTensor(Shape shape, int bits, std::span<const std::int8_t> codes, ScaleLayout layout)
    : shape_(std::move(shape)), bits_(bits), layout_(std::move(layout)) {
  check_bits(bits_);
  QUAMBA_CHECK(codes.size() == shape_numel(shape_), "QTensor code count does not match shape");
  layout_.validate(shape_);
  const int qmax = qmax_for_bits(bits_);
  for (auto c : codes)
    QUAMBA_CHECK(c >= -qmax - 1 && c <= qmax, "QTensor code outside the " +
                                                  std::to_string(bits_) + "-bit range");
  if (bits_ == 4) {
    payload_ = pack_int4(codes);
  } else {
    payload_.resize(codes.size());
    std::memcpy(payload_.data(), codes.data(), codes.size());
  }
}

std::int8_t QTensor::code(std::size_t i) const {
  if (bits_ == 4) return int4_at(payload_, i);
  return static_cast<std::int8_t>(payload_[i]);
}

std::vector<std::int8_t> QTensor::codes() const {
  if (bits_ == 4) return unpack_int4(payload_, numel());
  std::vector<std::int8_t> out(payload_.size());
  std::memcpy(out.data(), payload_.data(), payload_.size());
  return out;
}

std::size_t QTensor::storage_bytes() const {
  return payload_.size() + layout_.scales.size() * sizeof(float);
}

QTensor quantize(const Tensor& x, const ScaleLayout& layout, int bits) {
  check_bits(bits);
  layout.validate(x.shape());
  const auto idx = layout.element_scale_indices(x.shape());
  std::vector<std::int8_t> codes(x.numel());
  const auto data = x.data();
  for (std::size_t i = 0; i < codes.size(); ++i)
    codes[i] = quantize_value(data[i], layout.scales[idx[i]], bits);
  return QTensor(x.shape(), bits, codes, layout);
}

Tensor dequantize(const QTensor& q) {
  const auto idx = q.layout().element_scale_indices(q.shape());
  const auto& scales = q.layout().scales;
  Tensor out(q.shape());
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(q.code(i)) * scales[idx[i]];
  return out;
}

Tensor fake_quantize(const Tensor& x, const ScaleLayout& layout, int bits) {
  check_bits(bits);
  layout.validate(x.shape());
  const auto idx = layout.element_scale_indices(x.shape());
  Tensor out(x.shape());
  const auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const float s = layout.scales[idx[i]];
    dst[i] = static_cast<float>(quantize_value(src[i], s, bits)) * s;
  }
  return out;
}

float fuse_scales(float s_x, float s_w, float s_y) {
  QUAMBA_CHECK(s_x > 0.0f && s_w > 0.0f && s_y > 0.0f, "fuse_scales needs positive scales");
  return s_x / s_y;
}

QTensor quantized_linear(const QTensor& x, const QTensor& w, float s_y, int out_bits) {
  QUAMBA_CHECK(x.shape().size() == 2 && w.shape().size() == 2, "quantized_linear needs rank 2");
  const std::size_t t = x.shape()[0], in = x.shape()[1], out = w.shape()[0];
  QUAMBA_CHECK(w.shape()[1] == in, "quantized_linear inner dimension mismatch");
  QUAMBA_CHECK(x.layout().kind == LayoutKind::PerTensor, "activation must be per-tensor");
  const bool per_channel = w.layout().kind == LayoutKind::PerChannel && w.layout().axis == 0;
  QUAMBA_CHECK(per_channel || w.layout().kind == LayoutKind::PerTensor,
               "weight must be per-tensor or per-output-channel");
  const float s_x = x.layout().scales[0];
  const auto xc = x.codes();
  const auto wc = w.codes();
  std::vector<std::int8_t> yc(t * out);
  for (std::size_t o = 0; o < out; ++o) {
    const float s_w = w.layout().scales[per_channel ? o : 0];
    const float multiplier = s_w * fuse_scales(s_x, s_w, s_y);
    for (std::size_t i = 0; i < t; ++i) {
      std::int32_t acc = 0;
      for (std::size_t k = 0; k < in; ++k)
        acc += static_cast<std::int32_t>(xc[i * in + k]) * static_cast<std::int32_t>(wc[o * in + k]);
      yc[i * out + o] = quantize_value(multiplier * static_cast<float>(acc), 1.0f, out_bits);
    }
  }
  return QTensor({t, out}, out_bits, yc, ScaleLayout::per_tensor(s_y));
}

void put_qtensor(Archive& archive, const std::string& name, const QTensor& q) {
  if (q.bits() == 4) {
    archive.add(name, Int4Tensor{q.shape(), std::vector<std::uint8_t>(q.payload().begin(),
                                                                      q.payload().end())});
  } else {
    archive.add(name, Int8Tensor{q.shape(), q.codes()});
  }
  const auto& scales = q.layout().scales;
  archive.add(name + ".scales", Tensor({scales.size()}, scales));
  json d = q.layout().descriptor();
  d["bits"] = q.bits();
  archive.add_meta(name + ".layout", std::move(d));
}

QTensor get_qtensor(const Archive& archive, const std::string& name) {
  const json& d = archive.meta(name + ".layout");
  const int bits = d.at("bits").get<int>();
  const auto& s = archive.tensor(name + ".scales");
  auto layout = ScaleLayout::from_descriptor(d, s.vec());
  if (bits == 4) {
    const auto& p = archive.int4(name);
    const auto codes = unpack_int4(p.packed, shape_numel(p.shape));
    return QTensor(p.shape, 4, codes, std::move(layout));
  }
  const auto& p = archive.int8(name);
  return QTensor(p.shape, bits, p.data, std::move(layout));
}

}  // namespace quamba
