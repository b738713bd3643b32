#include <benchmark/benchmark.h>

#include <vector>

#include "quamba/gptq.hpp"
#include "quamba/hadamard.hpp"
#include "quamba/quantizer.hpp"
#include "quamba/rng.hpp"
#include "quamba/tensor.hpp"
#include "quamba/toy_model.hpp"

using namespace quamba;

namespace {

Tensor normal_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Fwht(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Tensor v = normal_tensor({n}, 1);
  for (auto _ : st) {
    fwht_inplace(v.data());
    benchmark::DoNotOptimize(v.data().data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Fwht)->RangeMultiplier(4)->Range(64, 16384);

void BM_Matmul(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const Tensor a = normal_tensor({n, n}, 1), b = normal_tensor({n, n}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(matmul(a, b));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_QuantizePerGroup(benchmark::State& st) {
  const int bits = static_cast<int>(st.range(0));
  const Tensor w = normal_tensor({256, 1024}, 3);
  const ScaleLayout layout = fit_scales(w, ScaleLayout::per_group(1, 32), bits);
  for (auto _ : st) benchmark::DoNotOptimize(quantize(w, layout, bits));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(w.numel()));
}
BENCHMARK(BM_QuantizePerGroup)->Arg(4)->Arg(8);

void BM_RtnVsGptq(benchmark::State& st) {
  const Tensor w = normal_tensor({128, 128}, 4), x = normal_tensor({512, 128}, 5);
  for (auto _ : st) {
    if (st.range(0) == 0)
      benchmark::DoNotOptimize(rtn_quantize_weight(w, 4, 32));
    else
      benchmark::DoNotOptimize(gptq_quantize_weight(w, x));
  }
}
BENCHMARK(BM_RtnVsGptq)->Arg(0)->Arg(1)->ArgNames({"gptq"});

// Sequential scan (chunk 0) against the chunked form on one toy block.
void BM_BlockForward(benchmark::State& st) {
  static const FloatModel m = generate_toy_model(ToyConfig{});
  const auto t = static_cast<std::size_t>(st.range(0));
  const Tensor u = normal_tensor({t, m.config.dims.d_model}, 6);
  ForwardOptions opt;
  opt.ssd_chunk = static_cast<std::size_t>(st.range(1));
  for (auto _ : st) benchmark::DoNotOptimize(block_forward_float(u, m.blocks[0], opt));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(t));
}
BENCHMARK(BM_BlockForward)->ArgsProduct({{64, 256}, {0, 16, 64}})->ArgNames({"T", "chunk"});

}  // namespace
BENCHMARK_MAIN();
