#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "quamba/archive.hpp"
#include "quamba/error.hpp"
#include "quamba/gptq.hpp"
#include "quamba/quantizer.hpp"

using namespace quamba;

TEST(ComputeScale, Examples) {
  const std::vector<float> a{2.54f, -1.27f, 0.0f};
  EXPECT_FLOAT_EQ(compute_scale(a, 8), 2.54f / 127.0f);
  EXPECT_NEAR(compute_scale(a, 8), 0.02f, 1e-9);
  const std::vector<float> z{0.0f, 0.0f};
  EXPECT_EQ(compute_scale(z, 8), 1.0f);
  const std::vector<float> s{7.0f};
  EXPECT_EQ(compute_scale(s, 4), 1.0f);
  const std::vector<float> bad{std::nanf("")};
  EXPECT_THROW(compute_scale(bad, 8), Error);
  EXPECT_THROW(check_bits(3), Error);
}

TEST(Quantize, Examples) {
  const Tensor x({3}, {2.54f, -1.27f, 0.0f});
  const QTensor q = quantize(x, ScaleLayout::per_tensor(0.02f), 8);
  EXPECT_EQ(q.codes(), (std::vector<std::int8_t>{127, -64, 0}));

  const QTensor clamp = quantize(Tensor({1}, {1000.0f}), ScaleLayout::per_tensor(1.0f / 127.0f), 8);
  EXPECT_EQ(clamp.code(0), 127);

  std::vector<float> lattice;
  for (int v = -8; v <= 7; ++v) lattice.push_back(0.25f * static_cast<float>(v));
  const Tensor lt({lattice.size()}, lattice);
  const QTensor q4 = quantize(lt, ScaleLayout::per_tensor(0.25f), 4);
  for (int v = -8; v <= 7; ++v) EXPECT_EQ(q4.code(static_cast<std::size_t>(v + 8)), v);
  EXPECT_TRUE(bit_equal(dequantize(q4), lt));

  EXPECT_THROW(quantize(Tensor({2, 3}), ScaleLayout::per_group(1, 2), 8), Error);
}

TEST(Quantize, RoundHalfEven) {
  const Tensor x({4}, {0.5f, 1.5f, 2.5f, -0.5f});
  const QTensor q = quantize(x, ScaleLayout::per_tensor(1.0f), 8);
  EXPECT_EQ(q.codes(), (std::vector<std::int8_t>{0, 2, 2, 0}));
}

TEST(Dequantize, Examples) {
  const std::vector<std::int8_t> c{127};
  const QTensor q({1}, 8, c, ScaleLayout::per_tensor(0.02f));
  EXPECT_FLOAT_EQ(dequantize(q)[0], 2.54f);
  const std::vector<std::int8_t> zc(6, 0);
  auto layout = ScaleLayout::per_row();
  layout.scales = {0.3f, 0.7f};
  const Tensor zeros = dequantize(QTensor({2, 3}, 8, zc, layout));
  for (float v : zeros.data()) EXPECT_EQ(v, 0.0f);
}

namespace {

std::vector<ScaleLayout> all_layouts() {
  return {ScaleLayout::per_tensor(),
          ScaleLayout::per_channel(0),
          ScaleLayout::per_channel(1),
          ScaleLayout::per_group(1, 4),
          ScaleLayout::per_group(1, 5),
          ScaleLayout::per_row(),
          ScaleLayout::clustered(1, {0, 0, 1, 2, 2, 1, 0, 1, 2, 0, 1, 1}),
          ScaleLayout::per_state_group({0, 3, 7, 12})};
}

}  // namespace

TEST(Quantize, ErrorBoundEveryLayout) {
  for (int bits : {4, 8}) {
    for (const auto& base : all_layouts()) {
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor x = oracle::random_tensor({6, 12}, seed * 31 + static_cast<std::uint64_t>(bits));
        const ScaleLayout l = fit_scales(x, base, bits);
        const QTensor q = quantize(x, l, bits);
        const Tensor back = dequantize(q);
        const auto idx = l.element_scale_indices(x.shape());
        const int lo = -(1 << (bits - 1)), hi = (1 << (bits - 1)) - 1;
        for (std::size_t i = 0; i < x.numel(); ++i) {
          const float s = l.scales[idx[i]];
          EXPECT_LE(std::fabs(back[i] - x[i]), s / 2 * (1 + 1e-6f))
              << layout_kind_name(l.kind) << " bits " << bits;
          EXPECT_GE(q.code(i), lo);
          EXPECT_LE(q.code(i), hi);
        }
      }
    }
  }
}

TEST(Quantize, RandomGridErrorBound) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<float> sd(1e-3f, 10.0f);
  for (int trial = 0; trial < 1000; ++trial) {
    const float s = sd(gen);
    std::uniform_real_distribution<float> xd(-127 * s, 127 * s);
    const float x = xd(gen);
    const float back = static_cast<float>(quantize_value(x, s, 8)) * s;
    EXPECT_LE(std::fabs(back - x), s / 2 * (1 + 1e-6f));
  }
}

TEST(Quantize, ScaleHomogeneousCodes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor x = oracle::random_tensor({4, 16}, seed);
    const ScaleLayout l = fit_scales(x, ScaleLayout::per_group(1, 8), 4);
    const auto codes = quantize(x, l, 4).codes();
    for (float alpha : {0.125f, 0.5f, 2.0f, 16.0f}) {
      Tensor ax = x;
      for (auto& v : ax.data()) v *= alpha;
      ScaleLayout al = l;
      for (auto& s : al.scales) s *= alpha;
      EXPECT_EQ(quantize(ax, al, 4).codes(), codes);
    }
  }
}

TEST(Quantize, FourBitSurvivesArchive) {
  const Tensor w = oracle::random_tensor({8, 32}, 11);
  const QTensor q = quantize(w, fit_scales(w, ScaleLayout::per_group(1, 16), 4), 4);
  Archive a;
  put_qtensor(a, "w", q);
  const Archive b = archive_decode(archive_encode(a));
  EXPECT_EQ(b.int4("w").packed, std::vector<std::uint8_t>(q.payload().begin(), q.payload().end()));
  const QTensor back = get_qtensor(b, "w");
  EXPECT_EQ(back.codes(), q.codes());
  EXPECT_EQ(back.bits(), 4);
  EXPECT_EQ(back.layout().scales, q.layout().scales);
  EXPECT_TRUE(bit_equal(dequantize(back), dequantize(q)));
}

TEST(FuseScales, Examples) {
  EXPECT_FLOAT_EQ(fuse_scales(0.02f, 0.5f, 0.04f), 0.5f);
  EXPECT_EQ(fuse_scales(0.3f, 0.1f, 0.3f), 1.0f);
  EXPECT_THROW(fuse_scales(0.0f, 1.0f, 1.0f), Error);
}

TEST(QuantizedLinear, MatchesFloatGemm) {
  const Tensor x = oracle::random_tensor({16, 16}, 21);
  const Tensor w = oracle::random_tensor({16, 16}, 22);
  const Tensor ref = oracle::naive_matmul(x, w.transposed());
  const QTensor qx = quantize(x, fit_scales(x, ScaleLayout::per_tensor(), 8), 8);
  const QTensor qw = quantize(w, fit_scales(w, ScaleLayout::per_channel(0), 8), 8);
  const float s_y = compute_scale(ref.data(), 8);
  const Tensor y = dequantize(quantized_linear(qx, qw, s_y, 8));
  EXPECT_LE(oracle::max_rel(y, ref), 0.02);
}

TEST(QuantizedLinear, LatticeIsExact) {
  std::mt19937_64 gen(5);
  Tensor x({6, 4}), w({5, 4});
  for (auto& v : x.data()) v = static_cast<float>(static_cast<int>(gen() % 7) - 3);
  for (auto& v : w.data()) v = static_cast<float>(static_cast<int>(gen() % 7) - 3);
  const QTensor qx = quantize(x, ScaleLayout::per_tensor(1.0f), 8);
  const QTensor qw = quantize(w, ScaleLayout::per_tensor(1.0f), 8);
  const Tensor y = dequantize(quantized_linear(qx, qw, 1.0f, 8));
  EXPECT_TRUE(bit_equal(y, oracle::naive_matmul(x, w.transposed())));
}

TEST(Gptq, OneByOneEqualsRtn) {
  const Tensor w({1, 1}, {0.37f});
  const Tensor x({3, 1}, {1.0f, -2.0f, 0.5f});
  const auto g = gptq_quantize_weight(w, x, {4, 32, 0.01f});
  EXPECT_EQ(g.weight.codes(), rtn_quantize_weight(w, 4, 32).codes());
  EXPECT_FALSE(g.fell_back);
}

TEST(Gptq, DiagonalHessianEqualsRtn) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Tensor w = oracle::random_tensor({6, 8}, seed);
    Tensor x({8, 8});
    for (std::size_t i = 0; i < 8; ++i) x.at(i, i) = 0.5f + static_cast<float>(i);
    const auto g = gptq_quantize_weight(w, x, {4, 4, 0.01f});
    const QTensor r = rtn_quantize_weight(w, 4, 4);
    EXPECT_EQ(g.weight.codes(), r.codes());
    EXPECT_EQ(g.weight.layout().scales, r.layout().scales);
  }
}

TEST(Gptq, BeatsRtnOnSmallLayers) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor w = oracle::random_tensor({8, 8}, 100 + seed);
    const Tensor x = oracle::random_tensor({4, 8}, 200 + seed);
    const auto g = gptq_quantize_weight(w, x, {4, 8, 0.01f});
    const double lg = gptq_proxy_loss(w, dequantize(g.weight), x);
    const double lr = gptq_proxy_loss(w, dequantize(rtn_quantize_weight(w, 4, 8)), x);
    wins += lg <= lr;
  }
  EXPECT_GE(wins, 18);
}

TEST(Gptq, RejectsBadInputs) {
  const Tensor w = oracle::random_tensor({4, 8}, 1);
  EXPECT_THROW(gptq_quantize_weight(w, Tensor({0, 8}), {}), Error);
  EXPECT_THROW(gptq_quantize_weight(w, Tensor({3, 7}), {}), Error);
}

TEST(Gptq, SingularHessianFallsBackToRtn) {
  const Tensor w = oracle::random_tensor({4, 8}, 1);
  // Identical input columns: rank-one Hessian, no damping.
  const Tensor x = Tensor::full({2, 8}, 1.0f);
  const auto g = gptq_quantize_weight(w, x, {4, 8, 0.0f});
  EXPECT_TRUE(g.fell_back);
  EXPECT_EQ(g.weight.codes(), rtn_quantize_weight(w, 4, 8).codes());
}

TEST(Gptq, DeadInputsAreZeroed) {
  const Tensor w = oracle::random_tensor({4, 8}, 1);
  Tensor x = oracle::random_tensor({16, 8}, 2);
  for (std::size_t r = 0; r < 16; ++r) x.at(r, 3) = 0.0f;
  const auto g = gptq_quantize_weight(w, x, {4, 8, 0.01f});
  EXPECT_FALSE(g.fell_back);
  for (std::size_t r = 0; r < 4; ++r) EXPECT_EQ(g.weight.code(r * 8 + 3), 0);
}
