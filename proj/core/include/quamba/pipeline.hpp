#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quamba/calibrate.hpp"
#include "quamba/model.hpp"
#include "quamba/precision_search.hpp"
#include "quamba/toy_model.hpp"

namespace quamba {

struct CalibConfig {
  std::size_t n_samples = 16;
  std::size_t seq_len = 64;
  std::uint64_t seed = 1;
};

struct PipelineConfig {
  std::string model_path;
  std::string tokens_path;  // defaults to model_path
  std::string stats_path;   // optional pre-computed statistics
  std::string plan_path;    // required for profile "mixed"
  std::string output_path;
  std::string report_path;
  CalibConfig calib;
  std::string profile = "W4A8";  // W8A8 | W4A8 | W4A16 | mixed
  std::size_t m = 4;
  std::size_t n = 4;
  std::size_t n_state_groups = 0;  // 0: whatever the model has; otherwise must match
  std::optional<float> clip_percentile;
  bool per_group = true;
  bool gptq = true;
  bool hadamard = true;
  bool per_state_group = true;
  bool sort_and_cluster = true;
  bool reorder = true;
  int embedding_bits = 16;  // 16 keeps the table in float
  int head_bits = 16;
  std::size_t group_size = 32;
  float damp_ratio = 0.01f;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  // Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j);

  // The five W4A8 rows of the ablation, in order: PerG; +Had; +GPTQ; +PerSG; +SnC.
  static PipelineConfig ablation_row(std::size_t row);
};

struct QuantizeResult {
  QuantizedModel model;
  FloatModel transformed;  // float model after reorder and Hadamard fusion
  std::vector<ClusterMap> cluster_maps;
  std::size_t gptq_fallbacks = 0;
};

// Calibration tokens as configured: the "calib.tokens" entry of a token
// archive when one is given, otherwise generated from calib.seed.
Tensor calibration_tokens(const PipelineConfig& cfg, const ModelConfig& model,
                          const Archive* tokens_archive);

// stats → sort-and-cluster → reorder → Hadamard fusion → recalibration on the
// transformed model → weight quantization (per-group, optional GPTQ) →
// activation scales → embedding/head quantization.
QuantizeResult quantize_model(const FloatModel& model, const Tensor& calib_tokens,
                              const PipelineConfig& cfg, const StatsMap* pre_stats = nullptr,
                              const PrecisionPlan* plan = nullptr);

// Pre-transform statistics of every site, per-block cluster maps and
// state-group scales.
Archive calibrate_model(const FloatModel& model, const Tensor& calib_tokens,
                        const PipelineConfig& cfg);

struct EvalReport {
  static constexpr int kSchemaVersion = 1;
  int schema_version = kSchemaVersion;
  std::size_t n_sequences = 0;
  std::size_t seq_len = 0;
  std::vector<std::string> profiles;
  std::vector<double> block_mse;  // residual stream after each block, unrotated basis
  double logits_mse = 0.0;
  double sqnr_db = 0.0;  // +inf when identical (serialized as null)
  double argmax_agreement = 0.0;
  std::size_t float_bytes = 0;
  std::size_t quantized_bytes = 0;
  nlohmann::json config = nlohmann::json::object();

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

EvalReport evaluate(const FloatModel& reference, const QuantizedModel& quantized,
                    const Tensor& tokens, const QuantModelOptions& opt = {});
// Float-vs-float comparison, e.g. a model against its re-saved copy.
EvalReport evaluate(const FloatModel& reference, const FloatModel& other, const Tensor& tokens);

// Model archive with "calib.tokens", "eval.tokens" and "toy.config" entries.
Archive toy_archive(const ToyConfig& toy, const CalibConfig& calib, std::size_t eval_samples = 8);

}  // namespace quamba
