#include "quamba/ssm_block.hpp"

#include <cmath>

#include "block_runtime.hpp"
#include "quamba/error.hpp"
#include "quamba/hadamard.hpp"

namespace quamba {

using nlohmann::json;

const char* variant_name(Variant v) { return v == Variant::Mamba1 ? "mamba1" : "mamba2"; }

Variant variant_from_name(const std::string& name) {
  if (name == "mamba1") return Variant::Mamba1;
  if (name == "mamba2") return Variant::Mamba2;
  throw Error("unknown variant '" + name + "' (expected mamba1 or mamba2)");
}

BlockDims BlockDims::defaults(Variant v) {
  BlockDims d;
  if (v == Variant::Mamba1) d.n_state_groups = 1;
  return d;
}

std::size_t BlockDims::conv_channels(Variant v) const {
  return v == Variant::Mamba2 ? d_inner + 2 * bc_width() : d_inner;
}

std::size_t BlockDims::dt_units(Variant v) const {
  return v == Variant::Mamba2 ? n_heads : d_inner;
}

std::size_t BlockDims::in_proj_rows(Variant v) const {
  return v == Variant::Mamba2 ? 2 * d_inner + 2 * bc_width() + n_heads : 2 * d_inner;
}

void BlockDims::validate(Variant v) const {
  QUAMBA_CHECK(d_model > 0 && d_inner > 0 && d_state > 0 && conv_kernel > 0,
               "block dims must be positive");
  QUAMBA_CHECK(n_heads > 0 && head_dim > 0 && n_heads * head_dim == d_inner,
               "d_inner must equal n_heads × head_dim");
  QUAMBA_CHECK(n_state_groups > 0 && n_heads % n_state_groups == 0,
               "n_heads must be a multiple of n_state_groups");
  if (v == Variant::Mamba1) {
    QUAMBA_CHECK(n_state_groups == 1, "Mamba1 blocks have a single state group");
    QUAMBA_CHECK(dt_rank > 0, "Mamba1 needs dt_rank > 0");
  }
}

json BlockDims::to_json() const {
  return {{"d_model", d_model},         {"d_inner", d_inner},   {"d_state", d_state},
          {"n_heads", n_heads},         {"head_dim", head_dim}, {"n_state_groups", n_state_groups},
          {"conv_kernel", conv_kernel}, {"dt_rank", dt_rank}};
}

BlockDims BlockDims::from_json(const json& j) {
  BlockDims d;
  d.d_model = j.at("d_model");
  d.d_inner = j.at("d_inner");
  d.d_state = j.at("d_state");
  d.n_heads = j.at("n_heads");
  d.head_dim = j.at("head_dim");
  d.n_state_groups = j.at("n_state_groups");
  d.conv_kernel = j.at("conv_kernel");
  d.dt_rank = j.value("dt_rank", std::size_t{4});
  return d;
}

std::vector<std::size_t> default_head_groups(const BlockDims& dims, Variant v) {
  const std::size_t per = dims.n_heads / (v == Variant::Mamba2 ? dims.n_state_groups : 1);
  std::vector<std::size_t> g(dims.n_heads);
  for (std::size_t h = 0; h < dims.n_heads; ++h) g[h] = v == Variant::Mamba2 ? h / per : 0;
  return g;
}

Tensor SsmBlockWeights::a() const {
  Tensor a = a_log;
  for (auto& v : a.data()) v = -std::exp(v);
  const std::size_t units = dims.dt_units(variant);
  return a.reshaped({units, a.numel() / units});
}

namespace {

void expect_shape(const Tensor& t, const Shape& s, const char* what) {
  QUAMBA_CHECK(t.shape() == s, std::string(what) + " has shape " + shape_to_string(t.shape()) +
                                   ", expected " + shape_to_string(s));
}

}  // namespace

void SsmBlockWeights::validate() const {
  dims.validate(variant);
  const auto& d = dims;
  const std::size_t units = d.dt_units(variant);
  const std::size_t conv_c = d.conv_channels(variant);
  expect_shape(in_proj, {d.in_proj_rows(variant), d.d_model}, "in_proj");
  if (variant == Variant::Mamba1) {
    expect_shape(x_proj, {d.dt_rank + 2 * d.d_state, d.d_inner}, "x_proj");
    expect_shape(dt_proj, {d.d_inner, d.dt_rank}, "dt_proj");
    expect_shape(a_log, {d.d_inner, d.d_state}, "a_log");
  } else {
    expect_shape(a_log, {d.n_heads}, "a_log");
  }
  expect_shape(conv_weight, {conv_c, d.conv_kernel}, "conv_weight");
  expect_shape(conv_bias, {conv_c}, "conv_bias");
  expect_shape(d_param, {units}, "d_param");
  expect_shape(dt_bias, {units}, "dt_bias");
  expect_shape(norm_weight, {d.d_inner}, "norm_weight");
  expect_shape(out_proj, {d.d_model, d.d_inner}, "out_proj");
  QUAMBA_CHECK(head_group.size() == d.n_heads, "head_group must have one entry per head");
  for (auto g : head_group) QUAMBA_CHECK(g < d.n_state_groups, "head_group entry out of range");
  for (float v : a_log.data())
    QUAMBA_CHECK(std::isfinite(v), "a_log must be finite so that A = -exp(a_log) < 0");
}

SsmState zero_state(const SsmBlockWeights& w) {
  const auto& d = w.dims;
  return {Tensor({d.d_inner, d.d_state}),
          Tensor({d.conv_channels(w.variant), d.conv_kernel - 1})};
}

ScanLayout scan_layout(const SsmBlockWeights& w) {
  return {w.dims.head_dim, w.dims.d_state, w.variant == Variant::Mamba1, w.head_group};
}

Projections project_inputs(const Tensor& u, const SsmBlockWeights& w) {
  const auto& d = w.dims;
  QUAMBA_CHECK(u.rank() == 2 && u.dim(1) == d.d_model,
               "block input must be [T × " + std::to_string(d.d_model) + "]");
  QUAMBA_CHECK(w.in_proj.rank() == 2 && w.in_proj.dim(0) == d.in_proj_rows(w.variant),
               "in_proj rows inconsistent with block dims");
  const Tensor p = linear(u, w.in_proj);
  Projections out;
  out.z = p.slice_cols(0, d.d_inner);
  out.x = p.slice_cols(d.d_inner, 2 * d.d_inner);
  if (w.variant == Variant::Mamba2) {
    const std::size_t b0 = 2 * d.d_inner, c0 = b0 + d.bc_width(), t0 = c0 + d.bc_width();
    out.b = p.slice_cols(b0, c0);
    out.c = p.slice_cols(c0, t0);
    out.dt_raw = p.slice_cols(t0, t0 + d.n_heads);
  }
  return out;
}

SelectiveProjections project_selective(const Tensor& x, const SsmBlockWeights& w) {
  QUAMBA_CHECK(w.variant == Variant::Mamba1, "project_selective is Mamba1-only");
  const auto& d = w.dims;
  const Tensor p = linear(x, w.x_proj);
  return {p.slice_cols(0, d.dt_rank), p.slice_cols(d.dt_rank, d.dt_rank + d.d_state),
          p.slice_cols(d.dt_rank + d.d_state, d.dt_rank + 2 * d.d_state)};
}

Tensor causal_conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Tensor* cache) {
  QUAMBA_CHECK(x.rank() == 2 && weight.rank() == 2, "conv needs [T × C] input, [C × K] weight");
  const std::size_t t_len = x.dim(0), ch = x.dim(1), k = weight.dim(1);
  QUAMBA_CHECK(k >= 1, "conv kernel must be >= 1");
  QUAMBA_CHECK(weight.dim(0) == ch && bias.numel() == ch, "conv channel mismatch");
  const std::size_t hist_len = k - 1;
  Tensor zero_hist({ch, hist_len});
  const Tensor& hist = cache ? *cache : zero_hist;
  QUAMBA_CHECK(hist.rank() == 2 && hist.dim(0) == ch && hist.dim(1) == hist_len,
               "conv cache shape " + shape_to_string(hist.shape()) + " does not match [" +
                   std::to_string(ch) + "x" + std::to_string(hist_len) + "]");

  Tensor out({t_len, ch});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < ch; ++c) {
      double acc = bias[c];
      for (std::size_t j = 0; j < k; ++j) {
        // Tap j reads input t − (k − 1) + j.
        const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(hist_len);
        const float v = idx >= 0 ? x.at(static_cast<std::size_t>(idx), c)
                                 : hist.at(c, static_cast<std::size_t>(static_cast<std::ptrdiff_t>(hist_len) + idx));
        acc += static_cast<double>(weight.at(c, j)) * v;
      }
      out.at(t, c) = silu(static_cast<float>(acc));
    }
  }

  if (cache && hist_len > 0) {
    Tensor next({ch, hist_len});
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t j = 0; j < hist_len; ++j) {
        // Position in the concatenation [hist | x] of length hist_len + T.
        const std::size_t pos = t_len + j;
        next.at(c, j) = pos < hist_len ? hist.at(c, pos) : x.at(pos - hist_len, c);
      }
    }
    *cache = std::move(next);
  }
  return out;
}

Tensor compute_dt(const Tensor& dt_raw, const Tensor& dt_bias) {
  QUAMBA_CHECK(dt_raw.rank() == 2 && dt_raw.dim(1) == dt_bias.numel(),
               "dt_raw width does not match dt_bias");
  Tensor dt(dt_raw.shape());
  for (std::size_t t = 0; t < dt_raw.dim(0); ++t)
    for (std::size_t u = 0; u < dt_raw.dim(1); ++u)
      dt.at(t, u) = softplus(dt_raw.at(t, u) + dt_bias[u]);
  return dt;
}

Tensor decay_from_dt(const Tensor& dt, const Tensor& a) {
  const std::size_t t_len = dt.dim(0), units = dt.dim(1);
  QUAMBA_CHECK(a.numel() % units == 0 && a.numel() >= units, "A does not match Δ units");
  const std::size_t k = a.numel() / units;
  for (float v : a.data()) QUAMBA_CHECK(v < 0.0f, "A must be strictly negative");
  Tensor decay({t_len, units, k});
  auto out = decay.data();
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t u = 0; u < units; ++u)
      for (std::size_t n = 0; n < k; ++n)
        out[(t * units + u) * k + n] = std::exp(dt.at(t, u) * a[u * k + n]);
  return decay;
}

Discretized discretize(const Tensor& dt_raw, const Tensor& dt_bias, const Tensor& a) {
  Tensor dt = compute_dt(dt_raw, dt_bias);
  Tensor decay = decay_from_dt(dt, a);
  return {std::move(decay), std::move(dt)};
}

namespace {

struct ScanGeometry {
  std::size_t t_len, d_inner, units, k, groups;
};

ScanGeometry check_scan(const ScanInputs& in, const ScanLayout& l, const Tensor* h0) {
  QUAMBA_CHECK(in.x.rank() == 2, "scan x must be [T × d_inner]");
  ScanGeometry g;
  g.t_len = in.x.dim(0);
  g.d_inner = in.x.dim(1);
  QUAMBA_CHECK(l.head_dim > 0 && g.d_inner % l.head_dim == 0, "d_inner not a multiple of head_dim");
  const std::size_t heads = g.d_inner / l.head_dim;
  QUAMBA_CHECK(l.head_group.size() == heads, "head_group size does not match head count");
  g.units = l.per_channel_dt ? g.d_inner : heads;
  QUAMBA_CHECK(in.dt.rank() == 2 && in.dt.dim(0) == g.t_len && in.dt.dim(1) == g.units,
               "Δ shape mismatch in scan");
  QUAMBA_CHECK(in.decay.numel() % std::max<std::size_t>(g.t_len * g.units, 1) == 0,
               "Ȧ shape mismatch in scan");
  g.k = g.t_len ? in.decay.numel() / (g.t_len * g.units) : 1;
  QUAMBA_CHECK(g.k == 1 || g.k == l.d_state, "Ȧ must have 1 or d_state entries per unit");
  QUAMBA_CHECK(in.b.rank() == 2 && in.b.dim(0) == g.t_len && in.b.dim(1) % l.d_state == 0,
               "B shape mismatch in scan");
  QUAMBA_CHECK(in.c.shape() == in.b.shape(), "C shape must equal B shape");
  g.groups = in.b.dim(1) / l.d_state;
  for (auto grp : l.head_group) QUAMBA_CHECK(grp < g.groups, "head_group refers to a missing B/C group");
  QUAMBA_CHECK(in.d.numel() == g.units, "D length mismatch in scan");
  if (in.z) QUAMBA_CHECK(in.z->shape() == in.x.shape(), "z shape must equal x shape");
  if (h0)
    QUAMBA_CHECK(h0->rank() == 2 && h0->dim(0) == g.d_inner && h0->dim(1) == l.d_state,
                 "state shape " + shape_to_string(h0->shape()) + " does not match [" +
                     std::to_string(g.d_inner) + "x" + std::to_string(l.d_state) + "]");
  return g;
}

void apply_gate(Tensor& y, const Tensor* z) {
  if (!z) return;
  auto yd = y.data();
  const auto zd = z->data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] *= silu(zd[i]);
}

}  // namespace

ScanOutput selective_scan(const ScanInputs& in, const ScanLayout& l, const Tensor* h0,
                          Tensor* state_channel_max) {
  const auto g = check_scan(in, l, h0);
  const std::size_t n_state = l.d_state;
  Tensor h = h0 ? *h0 : Tensor({g.d_inner, n_state});
  Tensor y({g.t_len, g.d_inner});
  if (state_channel_max)
    QUAMBA_CHECK(state_channel_max->numel() == g.d_inner, "state max tracker size mismatch");

  const auto decay = in.decay.data();
  for (std::size_t t = 0; t < g.t_len; ++t) {
    for (std::size_t ch = 0; ch < g.d_inner; ++ch) {
      const std::size_t head = ch / l.head_dim;
      const std::size_t unit = l.per_channel_dt ? ch : head;
      const std::size_t grp = l.head_group[head];
      const float dt = in.dt.at(t, unit);
      const float xv = in.x.at(t, ch);
      const float* bt = in.b.row(t).data() + grp * n_state;
      const float* ct = in.c.row(t).data() + grp * n_state;
      const float* at = decay.data() + (t * g.units + unit) * g.k;
      float* hr = h.row(ch).data();
      float acc = 0.0f;
      float hmax = 0.0f;
      for (std::size_t n = 0; n < n_state; ++n) {
        const float a = at[g.k == 1 ? 0 : n];
        hr[n] = a * hr[n] + dt * bt[n] * xv;
        acc += ct[n] * hr[n];
        hmax = std::max(hmax, std::fabs(hr[n]));
      }
      y.at(t, ch) = acc + in.d[unit] * xv;
      if (state_channel_max) (*state_channel_max)[ch] = std::max((*state_channel_max)[ch], hmax);
    }
  }
  apply_gate(y, in.z);
  return {std::move(y), std::move(h)};
}

ScanOutput ssd_chunked(const ScanInputs& in, const ScanLayout& l, std::size_t chunk,
                       const Tensor* h0) {
  QUAMBA_CHECK(chunk >= 1, "chunk must be >= 1");
  const auto g = check_scan(in, l, h0);
  QUAMBA_CHECK(!l.per_channel_dt && g.k == 1,
               "ssd_chunked needs one scalar decay per head (Mamba2 layout)");
  const std::size_t n_state = l.d_state, hd = l.head_dim;
  const std::size_t heads = g.d_inner / hd;

  std::vector<double> h(g.d_inner * n_state, 0.0);
  if (h0)
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = (*h0)[i];
  Tensor y({g.t_len, g.d_inner});

  std::vector<double> la, seg, cb, m, decay_in;
  for (std::size_t t0 = 0; t0 < g.t_len; t0 += chunk) {
    const std::size_t len = std::min(chunk, g.t_len - t0);
    la.assign(len, 0.0);
    seg.assign(len * len, 0.0);
    cb.assign(len * len, 0.0);
    m.assign(len * len, 0.0);
    decay_in.assign(len, 0.0);
    for (std::size_t head = 0; head < heads; ++head) {
      const std::size_t grp = l.head_group[head];
      for (std::size_t t = 0; t < len; ++t) la[t] = std::log(static_cast<double>(in.decay[(t0 + t) * g.units + head]));
      // seg[t][s] = Σ_{r=s+1..t} la[r], built downward from s = t so that
      // exp(-inf) collapses to 0 without forming inf − inf.
      for (std::size_t t = 0; t < len; ++t) {
        double acc = 0.0;
        seg[t * len + t] = 0.0;
        for (std::size_t s = t; s-- > 0;) {
          acc += la[s + 1];
          seg[t * len + s] = acc;
        }
        decay_in[t] = std::exp(acc + la[0]);
      }
      for (std::size_t t = 0; t < len; ++t) {
        const float* ct = in.c.row(t0 + t).data() + grp * n_state;
        for (std::size_t s = 0; s <= t; ++s) {
          const float* bs = in.b.row(t0 + s).data() + grp * n_state;
          double dot = 0.0;
          for (std::size_t n = 0; n < n_state; ++n) dot += static_cast<double>(ct[n]) * bs[n];
          cb[t * len + s] = dot;
          m[t * len + s] = std::exp(seg[t * len + s]) * dot * in.dt.at(t0 + s, head);
        }
      }
      for (std::size_t p = 0; p < hd; ++p) {
        const std::size_t ch = head * hd + p;
        double* hc = h.data() + ch * n_state;
        for (std::size_t t = 0; t < len; ++t) {
          double intra = 0.0;
          for (std::size_t s = 0; s <= t; ++s) intra += m[t * len + s] * in.x.at(t0 + s, ch);
          const float* ct = in.c.row(t0 + t).data() + grp * n_state;
          double carried = 0.0;
          for (std::size_t n = 0; n < n_state; ++n) carried += static_cast<double>(ct[n]) * hc[n];
          const double dx = static_cast<double>(in.d[head]) * in.x.at(t0 + t, ch);
          y.at(t0 + t, ch) = static_cast<float>(intra + decay_in[t] * carried + dx);
        }
        // State at chunk end.
        const double keep = decay_in[len - 1];
        for (std::size_t n = 0; n < n_state; ++n) {
          double acc = keep * hc[n];
          for (std::size_t s = 0; s < len; ++s) {
            const double to_end = std::exp(seg[(len - 1) * len + s]);
            acc += to_end * in.dt.at(t0 + s, head) *
                   static_cast<double>(in.b.row(t0 + s)[grp * n_state + n]) * in.x.at(t0 + s, ch);
          }
          hc[n] = acc;
        }
      }
    }
  }
  apply_gate(y, in.z);
  Tensor hf({g.d_inner, n_state});
  for (std::size_t i = 0; i < h.size(); ++i) hf[i] = static_cast<float>(h[i]);
  return {std::move(y), std::move(hf)};
}

Tensor rms_norm(const Tensor& y, const Tensor& weight, float eps) {
  QUAMBA_CHECK(y.rank() == 2 && weight.numel() == y.dim(1), "rms_norm weight size mismatch");
  Tensor out(y.shape());
  const std::size_t c = y.dim(1);
  for (std::size_t r = 0; r < y.dim(0); ++r) {
    double ss = 0.0;
    for (float v : y.row(r)) ss += static_cast<double>(v) * v;
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(c) + eps));
    for (std::size_t j = 0; j < c; ++j) out.at(r, j) = y.at(r, j) * inv * weight[j];
  }
  return out;
}

const char* site_name(Site s) {
  switch (s) {
    case Site::U: return "u";
    case Site::X: return "x";
    case Site::B: return "B";
    case Site::C: return "C";
    case Site::Z: return "z";
    case Site::Dt: return "dt";
    case Site::DtLow: return "dt_low";
    case Site::Y: return "y";
    case Site::State: return "state";
  }
  return "?";
}

Site site_from_name(std::string_view name) {
  for (auto s : {Site::U, Site::X, Site::B, Site::C, Site::Z, Site::Dt, Site::DtLow, Site::Y,
                 Site::State})
    if (name == site_name(s)) return s;
  throw Error("unknown activation site '" + std::string(name) + "'");
}

namespace detail {

BlockTensors float_tensors(const SsmBlockWeights& w) {
  return {&w.in_proj, &w.x_proj, &w.dt_proj, &w.out_proj};
}

Tensor SiteHooks::out_proj_input(const Tensor& y, bool hadamard) const {
  if (!hadamard) return y;
  return fwht(y, HadamardPlan::normalized(y.dim(1)));
}

Tensor run_block(const Tensor& u, const SsmBlockWeights& w, const BlockTensors& tensors,
                 const SiteHooks& hooks, const ForwardOptions& opt, SsmState* state,
                 const Observer* observer) {
  const auto& d = w.dims;
  QUAMBA_CHECK(u.rank() == 2 && u.dim(1) == d.d_model,
               "block input must be [T × " + std::to_string(d.d_model) + "], got " +
                   shape_to_string(u.shape()));
  auto site = [&](Site s, Tensor v) {
    if (observer) (*observer)(s, v);
    return hooks.activation(s, std::move(v));
  };

  const Tensor uq = site(Site::U, u);
  const Tensor p = linear(uq, *tensors.in_proj);
  Tensor z = p.slice_cols(0, d.d_inner);
  Tensor x, b, c, dt_raw;
  Tensor* conv_cache = state ? &state->conv_cache : nullptr;
  if (w.variant == Variant::Mamba2) {
    const std::size_t xbc_end = 2 * d.d_inner + 2 * d.bc_width();
    const Tensor xbc = causal_conv1d(p.slice_cols(d.d_inner, xbc_end), w.conv_weight,
                                     w.conv_bias, conv_cache);
    x = site(Site::X, xbc.slice_cols(0, d.d_inner));
    b = site(Site::B, xbc.slice_cols(d.d_inner, d.d_inner + d.bc_width()));
    c = site(Site::C, xbc.slice_cols(d.d_inner + d.bc_width(), d.d_inner + 2 * d.bc_width()));
    dt_raw = p.slice_cols(xbc_end, xbc_end + d.n_heads);
  } else {
    x = site(Site::X, causal_conv1d(p.slice_cols(d.d_inner, 2 * d.d_inner), w.conv_weight,
                                    w.conv_bias, conv_cache));
    const Tensor sel = linear(x, *tensors.x_proj);
    const Tensor dt_low = site(Site::DtLow, sel.slice_cols(0, d.dt_rank));
    b = site(Site::B, sel.slice_cols(d.dt_rank, d.dt_rank + d.d_state));
    c = site(Site::C, sel.slice_cols(d.dt_rank + d.d_state, d.dt_rank + 2 * d.d_state));
    dt_raw = linear(dt_low, *tensors.dt_proj);
  }
  z = site(Site::Z, std::move(z));
  const Tensor dt = site(Site::Dt, compute_dt(dt_raw, w.dt_bias));
  const Tensor decay = decay_from_dt(dt, w.a());

  const ScanLayout layout = scan_layout(w);
  const ScanInputs in{x, decay, dt, b, c, w.d_param, &z};
  const Tensor* h0 = state ? &state->h : nullptr;
  ScanOutput scan;
  if (opt.ssd_chunk > 0 && w.variant == Variant::Mamba2) {
    scan = ssd_chunked(in, layout, opt.ssd_chunk, h0);
  } else {
    Tensor hmax({d.d_inner});
    scan = selective_scan(in, layout, h0, observer ? &hmax : nullptr);
    if (observer) (*observer)(Site::State, hmax.reshaped({1, d.d_inner}));
  }
  if (state) {
    state->h = std::move(scan.h);
    hooks.cache_state(state->h);
  }

  const Tensor normed = rms_norm(scan.y, w.norm_weight);
  Tensor y_in = hooks.out_proj_input(normed, w.hadamard_fused);
  if (observer) {
    // Calibration sees the float activation out_proj consumes.
    (*observer)(Site::Y, w.hadamard_fused ? fwht(normed, HadamardPlan::normalized(d.d_inner))
                                          : normed);
  }
  return linear(y_in, *tensors.out_proj);
}

}  // namespace detail

Tensor block_forward_float(const Tensor& u, const SsmBlockWeights& w, const ForwardOptions& opt,
                           SsmState* state, const Observer* observer) {
  const detail::SiteHooks identity;
  return detail::run_block(u, w, detail::float_tensors(w), identity, opt, state, observer);
}

}  // namespace quamba
