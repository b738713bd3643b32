#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "quamba/archive.hpp"
#include "quamba/calibrate.hpp"
#include "quamba/error.hpp"
#include "quamba/pipeline.hpp"
#include "quamba/precision_search.hpp"
#include "quamba/reorder.hpp"
#include "quamba/toy_model.hpp"

using namespace quamba;

namespace {

const FloatModel& toy() {
  static const FloatModel m = generate_toy_model(ToyConfig{});
  return m;
}

Tensor calib_tokens() { return generate_tokens(256, 16, 64, 1); }
Tensor eval_tokens() { return generate_tokens(256, 8, 64, 99); }

double run_sqnr(const PipelineConfig& cfg) {
  return evaluate(toy(), quantize_model(toy(), calib_tokens(), cfg).model, eval_tokens()).sqnr_db;
}

}  // namespace

TEST(PipelineConfig, JsonRoundTripAndUnknownKeys) {
  PipelineConfig c;
  c.profile = "W8A8";
  c.m = 2;
  c.clip_percentile = 99.5f;
  c.gptq = false;
  c.embedding_bits = 8;
  const auto back = PipelineConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.clip_percentile, c.clip_percentile);
  EXPECT_THROW(PipelineConfig::from_json({{"gtpq", false}}), Error);
  EXPECT_THROW(PipelineConfig::from_json(nlohmann::json::array()), Error);
}

TEST(PipelineConfig, ValidationErrors) {
  auto bad = [](auto&& edit) {
    PipelineConfig c;
    edit(c);
    EXPECT_THROW(c.validate(), Error);
  };
  bad([](PipelineConfig& c) { c.profile = "W2A2"; });
  bad([](PipelineConfig& c) { c.m = 0; });
  bad([](PipelineConfig& c) { c.head_bits = 6; });
  bad([](PipelineConfig& c) { c.clip_percentile = 0.0f; });
  bad([](PipelineConfig& c) { c.calib.n_samples = 0; });
  PipelineConfig{}.validate();
}

TEST(PipelineConfig, AblationRowsToggleOneAxisEach) {
  const PipelineConfig r0 = PipelineConfig::ablation_row(0);
  EXPECT_EQ(r0.profile, "W4A8");
  EXPECT_TRUE(r0.per_group);
  EXPECT_FALSE(r0.hadamard || r0.gptq || r0.per_state_group || r0.sort_and_cluster);
  EXPECT_TRUE(PipelineConfig::ablation_row(1).hadamard);
  EXPECT_TRUE(PipelineConfig::ablation_row(2).gptq);
  EXPECT_TRUE(PipelineConfig::ablation_row(3).per_state_group);
  const PipelineConfig r4 = PipelineConfig::ablation_row(4);
  EXPECT_TRUE(r4.hadamard && r4.gptq && r4.per_state_group && r4.sort_and_cluster && r4.reorder);
  EXPECT_THROW(PipelineConfig::ablation_row(5), Error);
}

TEST(QuantizeModel, StageOrderErrors) {
  const Tensor calib = generate_tokens(256, 2, 16, 1);
  FloatModel rotated = rotate_model_hadamard(toy());
  EXPECT_THROW(quantize_model(rotated, calib, PipelineConfig{}), Error);

  FloatModel half = toy();
  half.blocks[0] = apply_reorder(half.blocks[0], build_reorder_plan(ClusterMap::identity(8, 16), half.config.dims));
  EXPECT_THROW(quantize_model(half, calib, PipelineConfig{}), Error);

  PipelineConfig groups;
  groups.n_state_groups = 3;
  EXPECT_THROW(quantize_model(toy(), calib, groups), Error);
  PipelineConfig mixed;
  mixed.profile = "mixed";
  EXPECT_THROW(quantize_model(toy(), calib, mixed), Error);
  StatsMap empty;
  EXPECT_THROW(quantize_model(toy(), calib, PipelineConfig{}, &empty), Error);
}

TEST(QuantizeModel, LatticeWeightsRoundTripExactly) {
  // Every projection row holds integers with ±127 in each group of 8, so all
  // 8-bit weight scales are 1.
  FloatModel m = toy();
  std::mt19937_64 gen(3);
  for (auto& b : m.blocks)
    for (Tensor* t : {&b.in_proj, &b.out_proj})
      for (std::size_t r = 0; r < t->dim(0); ++r)
        for (std::size_t c = 0; c < t->dim(1); ++c)
          t->at(r, c) = c % 8 == 0 ? 127.0f : static_cast<float>(static_cast<int>(gen() % 255) - 127);
  PipelineConfig c;
  c.profile = "W8A8";
  c.per_group = false;
  c.gptq = c.hadamard = c.per_state_group = c.sort_and_cluster = c.reorder = false;
  const auto r = quantize_model(m, generate_tokens(256, 2, 16, 1), c);
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    EXPECT_TRUE(bit_equal(r.model.blocks[b].base.in_proj, m.blocks[b].in_proj));
    EXPECT_TRUE(bit_equal(r.model.blocks[b].base.out_proj, m.blocks[b].out_proj));
    for (float s : r.model.blocks[b].in_proj.layout().scales) EXPECT_EQ(s, 1.0f);
  }
}

TEST(QuantizeModel, HeadToToeSizes) {
  const double float_bytes = static_cast<double>(archive_encode(float_model_to_archive(toy())).size());
  for (const auto& [profile, bits, limit] : {std::tuple{"W4A16", 4, 0.3}, std::tuple{"W8A8", 8, 0.55}}) {
    PipelineConfig c;
    c.profile = profile;
    c.embedding_bits = c.head_bits = bits;
    const auto r = quantize_model(toy(), calib_tokens(), c);
    const auto bytes = archive_encode(quantized_model_to_archive(r.model)).size();
    EXPECT_LE(static_cast<double>(bytes), limit * float_bytes) << profile;
    EXPECT_EQ(r.model.embedding_bits(), bits);
    EXPECT_EQ(r.model.head_bits(), bits);
  }
}

TEST(QuantizeModel, HadamardHelpsW4A8) {
  PipelineConfig on;
  PipelineConfig off;
  off.hadamard = false;
  EXPECT_GT(run_sqnr(on), run_sqnr(off));
}

TEST(QuantizeModel, Deterministic) {
  PipelineConfig c;
  const auto a = archive_encode(quantized_model_to_archive(quantize_model(toy(), calib_tokens(), c).model));
  const auto b = archive_encode(quantized_model_to_archive(quantize_model(toy(), calib_tokens(), c).model));
  EXPECT_EQ(a, b);
  EXPECT_EQ(archive_encode(calibrate_model(toy(), calib_tokens(), c)),
            archive_encode(calibrate_model(toy(), calib_tokens(), c)));
  EXPECT_EQ(archive_encode(toy_archive(ToyConfig{}, CalibConfig{})),
            archive_encode(toy_archive(ToyConfig{}, CalibConfig{})));
}

TEST(QuantizedArchive, RoundTripPreservesOutputs) {
  const auto q = quantize_model(toy(), calib_tokens(), PipelineConfig{}).model;
  const auto back = quantized_model_from_archive(archive_decode(archive_encode(quantized_model_to_archive(q))));
  const Tokens t = token_row(eval_tokens(), 0);
  EXPECT_TRUE(bit_equal(quantized_model_forward(back, t), quantized_model_forward(q, t)));
  EXPECT_EQ(archive_model_format(quantized_model_to_archive(q)), archive_model_format(quantized_model_to_archive(back)));
  EXPECT_TRUE(is_quantized_archive(quantized_model_to_archive(q)));
  EXPECT_FALSE(is_quantized_archive(float_model_to_archive(toy())));
}

TEST(Evaluate, ResavedFloatIsExact) {
  const FloatModel again = float_model_from_archive(archive_decode(archive_encode(float_model_to_archive(toy()))));
  const EvalReport r = evaluate(toy(), again, eval_tokens());
  EXPECT_EQ(r.logits_mse, 0.0);
  EXPECT_EQ(r.argmax_agreement, 1.0);
  for (double b : r.block_mse) EXPECT_EQ(b, 0.0);
  EXPECT_TRUE(std::isinf(r.sqnr_db));
  EXPECT_TRUE(r.to_json().at("logits").at("sqnr_db").is_null());
}

TEST(Evaluate, ReportRoundTrip) {
  const auto q = quantize_model(toy(), calib_tokens(), PipelineConfig{}).model;
  const EvalReport r = evaluate(toy(), q, eval_tokens());
  EXPECT_EQ(EvalReport::from_json(r.to_json()).to_json(), r.to_json());
  EXPECT_EQ(r.block_mse.size(), 2u);
  EXPECT_EQ(r.n_sequences, 8u);
  EXPECT_GT(r.float_bytes, r.quantized_bytes);
  nlohmann::json bad = r.to_json();
  bad["schema_version"] = 99;
  EXPECT_THROW(EvalReport::from_json(bad), Error);
}

TEST(ToyModel, GeneratorProperties) {
  for (Variant v : {Variant::Mamba1, Variant::Mamba2}) {
    ToyConfig tc;
    tc.variant = v;
    tc.dims = BlockDims::defaults(v);
    const FloatModel m = generate_toy_model(tc);
    for (const auto& b : m.blocks) {
      const Tensor a = b.a();
      for (float v : a.data()) EXPECT_LT(v, 0.0f);
    }
  }
  // Hottest to coldest x channel of the default toy.
  CollectOptions o;
  o.sites = {Site::X};
  const auto stats = collect_stats(toy(), generate_tokens(256, 8, 64, 1), o).stats;
  for (std::size_t b = 0; b < 2; ++b) {
    const auto& mx = stats.at(stats_key(b, Site::X)).channel_max;
    const auto [lo, hi] = std::minmax_element(mx.begin(), mx.end());
    EXPECT_GE(*hi / *lo, 100.0f) << "block " << b;
  }
  EXPECT_EQ(ToyConfig::from_json(ToyConfig{}.to_json()).to_json(), ToyConfig{}.to_json());
}

TEST(Search, ZeroBudgetIsAllA8) {
  const FloatModel m = sensitive_block_fixture(0);
  const auto q = quantize_model(m, generate_tokens(256, 4, 32, 1), PipelineConfig{}).model;
  FitnessEvaluator e(m, q, generate_tokens(256, 2, 32, 2));
  SearchConfig c;
  c.population = 4;
  c.generations = 2;
  c.n_mutations = c.n_crossovers = 2;
  const auto r = evolve(e, 0, c);
  EXPECT_EQ(r.plan.blocks, std::vector<Profile>(4, Profile::W4A8));
  for (const auto& g : r.trace.generations) EXPECT_EQ(g.best, r.fitness);
  // Re-evaluating the plan reproduces the traced fitness.
  EXPECT_EQ(fitness(r.plan, m, q, generate_tokens(256, 2, 32, 2)), r.fitness);
}
