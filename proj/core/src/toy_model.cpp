#include "quamba/toy_model.hpp"

#include <algorithm>
#include <cmath>

#include "quamba/error.hpp"
#include "quamba/rng.hpp"

namespace quamba {

using nlohmann::json;

json ToyConfig::to_json() const {
  return {{"variant", variant_name(variant)},
          {"dims", dims.to_json()},
          {"n_blocks", n_blocks},
          {"vocab", vocab},
          {"seed", seed},
          {"head_spread", head_spread},
          {"channel_sigma", channel_sigma},
          {"state_group_spread", state_group_spread},
          {"norm_outliers", norm_outliers},
          {"norm_outlier_gain", norm_outlier_gain},
          {"weight_outlier_frac", weight_outlier_frac},
          {"weight_outlier_gain", weight_outlier_gain},
          {"block_gain", block_gain}};
}

ToyConfig ToyConfig::from_json(const json& j) {
  ToyConfig c;
  c.variant = variant_from_name(j.value("variant", std::string("mamba2")));
  c.dims = j.contains("dims") ? BlockDims::from_json(j.at("dims")) : BlockDims::defaults(c.variant);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.vocab = j.value("vocab", c.vocab);
  c.seed = j.value("seed", c.seed);
  c.head_spread = j.value("head_spread", c.head_spread);
  c.channel_sigma = j.value("channel_sigma", c.channel_sigma);
  c.state_group_spread = j.value("state_group_spread", c.state_group_spread);
  c.norm_outliers = j.value("norm_outliers", c.norm_outliers);
  c.norm_outlier_gain = j.value("norm_outlier_gain", c.norm_outlier_gain);
  c.weight_outlier_frac = j.value("weight_outlier_frac", c.weight_outlier_frac);
  c.weight_outlier_gain = j.value("weight_outlier_gain", c.weight_outlier_gain);
  c.block_gain = j.value("block_gain", c.block_gain);
  return c;
}

namespace {

Tensor normal_tensor(Shape shape, double sd, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

void scale_row(Tensor& t, std::size_t r, double f) {
  for (auto& v : t.row(r)) v = static_cast<float>(v * f);
}

void add_spikes(Tensor& t, double frac, double gain, Rng& rng) {
  for (auto& v : t.data())
    if (rng.uniform() < frac) v = static_cast<float>(v * gain);
}

float inverse_softplus(double y) { return static_cast<float>(y + std::log(-std::expm1(-y))); }

double rms(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += static_cast<double>(v) * v;
  return std::sqrt(s / static_cast<double>(std::max<std::size_t>(t.numel(), 1)));
}

SsmBlockWeights generate_block(const ToyConfig& cfg, std::size_t index) {
  const auto& d = cfg.dims;
  const Variant v = cfg.variant;
  Rng rng = Rng::derive(cfg.seed, 1, index);
  SsmBlockWeights w;
  w.variant = v;
  w.dims = d;
  w.head_group = default_head_groups(d, v);

  w.in_proj = normal_tensor({d.in_proj_rows(v), d.d_model}, 1.0 / std::sqrt(double(d.d_model)), rng);
  std::vector<double> x_scale(d.d_inner);
  for (std::size_t h = 0; h < d.n_heads; ++h) {
    const double hf = std::exp(rng.uniform(0.0, std::log(cfg.head_spread)));
    for (std::size_t p = 0; p < d.head_dim; ++p)
      x_scale[h * d.head_dim + p] = hf * std::exp(cfg.channel_sigma * rng.normal());
  }
  for (std::size_t c = 0; c < d.d_inner; ++c) scale_row(w.in_proj, d.d_inner + c, x_scale[c]);

  const std::size_t units = d.dt_units(v);
  if (v == Variant::Mamba2) {
    const std::size_t g_count = d.n_state_groups;
    for (std::size_t g = 0; g < g_count; ++g) {
      // B and C spread in opposite directions, so every group's C·B and
      // hence its share of y stays comparable.
      const double t = g_count > 1 ? double(g) / double(g_count - 1) : 0.5;
      const double f = std::pow(cfg.state_group_spread, 0.5 - t);
      for (std::size_t s = 0; s < d.d_state; ++s) {
        scale_row(w.in_proj, 2 * d.d_inner + g * d.d_state + s, f);
        scale_row(w.in_proj, 2 * d.d_inner + d.bc_width() + g * d.d_state + s, 1.0 / f);
      }
    }
    for (std::size_t h = 0; h < d.n_heads; ++h)
      scale_row(w.in_proj, 2 * d.d_inner + 2 * d.bc_width() + h, 0.1);
  } else {
    w.x_proj = normal_tensor({d.dt_rank + 2 * d.d_state, d.d_inner},
                             1.0 / std::sqrt(double(d.d_inner)), rng);
    w.dt_proj = normal_tensor({d.d_inner, d.dt_rank}, 0.1 / std::sqrt(double(d.dt_rank)), rng);
  }

  const std::size_t ch = d.conv_channels(v);
  w.conv_weight = Tensor({ch, d.conv_kernel});
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t k = 0; k < d.conv_kernel; ++k)
      w.conv_weight.at(c, k) = static_cast<float>(
          k + 1 == d.conv_kernel ? rng.uniform(0.4, 0.9) : rng.uniform(-0.3, 0.3));
  w.conv_bias = normal_tensor({ch}, 0.05, rng);

  w.dt_bias = Tensor({units});
  for (auto& b : w.dt_bias.data())
    b = inverse_softplus(std::exp(rng.uniform(std::log(0.001), std::log(0.1))));
  if (v == Variant::Mamba2) {
    w.a_log = Tensor({d.n_heads});
    for (auto& a : w.a_log.data()) a = static_cast<float>(std::log(rng.uniform(1.0, 16.0)));
  } else {
    w.a_log = Tensor({d.d_inner, d.d_state});
    for (std::size_t c = 0; c < d.d_inner; ++c)
      for (std::size_t s = 0; s < d.d_state; ++s)
        w.a_log.at(c, s) = static_cast<float>(std::log(double(s + 1)));
  }
  w.d_param = Tensor::full({units}, 1.0f);

  w.norm_weight = Tensor({d.d_inner});
  for (std::size_t c = 0; c < d.d_inner; ++c)
    w.norm_weight[c] =
        static_cast<float>(std::pow(x_scale[c], -0.5) * (1.0 + 0.1 * rng.normal()));
  for (std::size_t i = 0; i < cfg.norm_outliers && i < d.d_inner; ++i)
    w.norm_weight[rng.below(d.d_inner)] *= static_cast<float>(cfg.norm_outlier_gain);

  w.out_proj = normal_tensor({d.d_model, d.d_inner}, 1.0 / std::sqrt(double(d.d_inner)), rng);
  add_spikes(w.in_proj, cfg.weight_outlier_frac, cfg.weight_outlier_gain, rng);
  add_spikes(w.out_proj, cfg.weight_outlier_frac, cfg.weight_outlier_gain, rng);
  w.validate();
  return w;
}

}  // namespace

Tensor generate_tokens(std::size_t vocab, std::size_t batch, std::size_t seq_len,
                       std::uint64_t seed) {
  QUAMBA_CHECK(vocab >= 1, "vocab must be positive");
  Rng rng(seed);
  Tensor t({batch, seq_len});
  for (auto& v : t.data()) v = static_cast<float>(rng.below(vocab));
  return t;
}

FloatModel generate_toy_model(const ToyConfig& cfg) {
  FloatModel m;
  m.config.variant = cfg.variant;
  m.config.dims = cfg.dims;
  m.config.n_blocks = cfg.n_blocks;
  m.config.vocab = cfg.vocab;
  m.config.validate();
  Rng rng = Rng::derive(cfg.seed, 0, 0);
  m.embedding = normal_tensor({cfg.vocab, cfg.dims.d_model}, 1.0, rng);
  m.head = normal_tensor({cfg.vocab, cfg.dims.d_model}, 1.0 / std::sqrt(double(cfg.dims.d_model)), rng);

  // Set each block's out_proj so its output RMS is block_gain times its
  // input RMS on a fixed probe batch.
  const Tensor probe = generate_tokens(cfg.vocab, 1, 64, Rng::derive(cfg.seed, 2, 0).next_u64());
  const Tokens tokens = token_row(probe, 0);
  Tensor h({tokens.size(), cfg.dims.d_model});
  for (std::size_t t = 0; t < tokens.size(); ++t)
    std::copy(m.embedding.row(tokens[t]).begin(), m.embedding.row(tokens[t]).end(),
              h.row(t).begin());
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    SsmBlockWeights w = generate_block(cfg, i);
    const double in_rms = rms(h);
    const double out_rms = rms(block_forward_float(h, w));
    if (out_rms > 0.0) {
      const float f = static_cast<float>(cfg.block_gain * in_rms / out_rms);
      for (auto& v : w.out_proj.data()) v *= f;
    }
    const Tensor y = block_forward_float(h, w);
    for (std::size_t k = 0; k < h.numel(); ++k) h[k] += y[k];
    m.blocks.push_back(std::move(w));
  }
  m.validate();
  return m;
}

FloatModel sensitive_block_fixture(std::uint64_t seed, std::size_t sensitive) {
  ToyConfig cfg;
  cfg.n_blocks = 4;
  cfg.seed = seed;
  cfg.head_spread = 4.0;
  cfg.channel_sigma = 0.3;
  cfg.weight_outlier_frac = 0.0;
  FloatModel m = generate_toy_model(cfg);
  QUAMBA_CHECK(sensitive < m.blocks.size(), "sensitive block index out of range");
  auto& w = m.blocks[sensitive];
  const auto& d = w.dims;
  Rng rng = Rng::derive(seed, 3, sensitive);
  // A few gate channels blow up (z has a single per-tensor scale) and the
  // residual gain doubles, so this block's 8-bit activation error dominates.
  for (std::size_t i = 0; i < 4; ++i) scale_row(w.in_proj, rng.below(d.d_inner), 50.0);
  for (auto& v : w.out_proj.data()) v *= 2.0f;
  m.validate();
  return m;
}

}  // namespace quamba
