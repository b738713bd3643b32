#include "quamba/pipeline.hpp"

#include <cmath>
#include <limits>

#include "quamba/error.hpp"
#include "quamba/gptq.hpp"
#include "quamba/hadamard.hpp"
#include "quamba/metrics.hpp"
#include "quamba/reorder.hpp"
#include "quamba/rng.hpp"

namespace quamba {

using nlohmann::json;

void PipelineConfig::validate() const {
  QUAMBA_CHECK(profile == "W8A8" || profile == "W4A8" || profile == "W4A16" || profile == "mixed",
               "profile must be W8A8, W4A8, W4A16 or mixed, got '" + profile + "'");
  QUAMBA_CHECK(m >= 1 && n >= 1, "m and n must be at least 1");
  if (clip_percentile)
    QUAMBA_CHECK(*clip_percentile > 0.0f && *clip_percentile <= 100.0f,
                 "clip_percentile must be in (0, 100]");
  for (int b : {embedding_bits, head_bits})
    QUAMBA_CHECK(b == 4 || b == 8 || b == 16, "embedding/head bits must be 4, 8 or 16");
  QUAMBA_CHECK(group_size >= 1, "group_size must be positive");
  QUAMBA_CHECK(damp_ratio > 0.0f, "damp_ratio must be positive");
  QUAMBA_CHECK(calib.n_samples >= 1 && calib.seq_len >= 1, "empty calibration set");
}

json PipelineConfig::to_json() const {
  return {{"model_path", model_path},
          {"tokens_path", tokens_path},
          {"stats_path", stats_path},
          {"plan_path", plan_path},
          {"output_path", output_path},
          {"report_path", report_path},
          {"calib", {{"n_samples", calib.n_samples}, {"seq_len", calib.seq_len}, {"seed", calib.seed}}},
          {"profile", profile},
          {"m", m},
          {"n", n},
          {"n_state_groups", n_state_groups},
          {"clip_percentile", clip_percentile ? json(*clip_percentile) : json(nullptr)},
          {"per_group", per_group},
          {"gptq", gptq},
          {"hadamard", hadamard},
          {"per_state_group", per_state_group},
          {"sort_and_cluster", sort_and_cluster},
          {"reorder", reorder},
          {"embedding_bits", embedding_bits},
          {"head_bits", head_bits},
          {"group_size", group_size},
          {"damp_ratio", damp_ratio},
          {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const json& j) {
  QUAMBA_CHECK(j.is_object(), "pipeline config must be a JSON object");
  PipelineConfig c;
  const json defaults = c.to_json();
  for (const auto& [key, _] : j.items())
    QUAMBA_CHECK(defaults.contains(key), "unknown pipeline config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("model_path", c.model_path);
  get("tokens_path", c.tokens_path);
  get("stats_path", c.stats_path);
  get("plan_path", c.plan_path);
  get("output_path", c.output_path);
  get("report_path", c.report_path);
  if (j.contains("calib")) {
    const json& cj = j.at("calib");
    c.calib.n_samples = cj.value("n_samples", c.calib.n_samples);
    c.calib.seq_len = cj.value("seq_len", c.calib.seq_len);
    c.calib.seed = cj.value("seed", c.calib.seed);
  }
  get("profile", c.profile);
  get("m", c.m);
  get("n", c.n);
  get("n_state_groups", c.n_state_groups);
  if (j.contains("clip_percentile") && !j.at("clip_percentile").is_null())
    c.clip_percentile = j.at("clip_percentile").get<float>();
  get("per_group", c.per_group);
  get("gptq", c.gptq);
  get("hadamard", c.hadamard);
  get("per_state_group", c.per_state_group);
  get("sort_and_cluster", c.sort_and_cluster);
  get("reorder", c.reorder);
  get("embedding_bits", c.embedding_bits);
  get("head_bits", c.head_bits);
  get("group_size", c.group_size);
  get("damp_ratio", c.damp_ratio);
  get("seed", c.seed);
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::ablation_row(std::size_t row) {
  QUAMBA_CHECK(row < 5, "ablation rows are 0..4");
  PipelineConfig c;
  c.profile = "W4A8";
  c.per_group = true;
  c.hadamard = row >= 1;
  c.gptq = row >= 2;
  c.per_state_group = row >= 3;
  c.sort_and_cluster = row >= 4;
  c.reorder = row >= 4;
  return c;
}

Tensor calibration_tokens(const PipelineConfig& cfg, const ModelConfig& model,
                          const Archive* tokens_archive) {
  if (tokens_archive && tokens_archive->contains("calib.tokens")) {
    const Tensor& t = tokens_archive->tensor("calib.tokens");
    QUAMBA_CHECK(t.rank() == 2 && t.dim(0) >= 1, "calib.tokens must be [batch × T]");
    const std::size_t rows = std::min(cfg.calib.n_samples, t.dim(0));
    const std::size_t cols = std::min(cfg.calib.seq_len, t.dim(1));
    return t.slice_rows(0, rows).slice_cols(0, cols);
  }
  return generate_tokens(model.vocab, cfg.calib.n_samples, cfg.calib.seq_len, cfg.calib.seed);
}

namespace {

const CalibStats& need(const StatsMap& stats, std::size_t block, Site s) {
  const auto it = stats.find(stats_key(block, s));
  QUAMBA_CHECK(it != stats.end(), "missing stats: no calibration record for " + stats_key(block, s));
  return it->second;
}

const Tensor& need_input(const std::map<std::string, Tensor>& inputs, std::size_t block, Site s) {
  const auto it = inputs.find(stats_key(block, s));
  QUAMBA_CHECK(it != inputs.end(), "missing stats: no GPTQ inputs for " + stats_key(block, s));
  return it->second;
}

QTensor quantize_weight(const Tensor& w, int bits, const PipelineConfig& cfg, const Tensor* inputs,
                        std::size_t& fallbacks) {
  const std::size_t group = cfg.per_group ? std::min(cfg.group_size, w.dim(1)) : w.dim(1);
  if (cfg.gptq && bits == 4) {
    QUAMBA_CHECK(inputs != nullptr, "GPTQ needs calibration inputs");
    GptqOptions opt;
    opt.bits = bits;
    opt.group_size = group;
    opt.damp_ratio = cfg.damp_ratio;
    GptqResult r = gptq_quantize_weight(w, *inputs, opt);
    fallbacks += r.fell_back;
    return std::move(r.weight);
  }
  if (!cfg.per_group) return quantize(w, fit_scales(w, ScaleLayout::per_row(), bits), bits);
  return rtn_quantize_weight(w, bits, group);
}

ScaleLayout per_tensor_from(const CalibStats& st, std::optional<float> clip = std::nullopt) {
  return ScaleLayout::per_tensor(calibrate_site_scale(st, 8, clip));
}

void check_stage_order(const FloatModel& m, const PipelineConfig& cfg) {
  std::size_t reordered = 0;
  for (const auto& b : m.blocks) reordered += b.reorder_perm.has_value();
  QUAMBA_CHECK(reordered == 0 || reordered == m.blocks.size(),
               "mixed archive: " + std::to_string(reordered) + " of " +
                   std::to_string(m.blocks.size()) + " blocks are reordered");
  if (cfg.sort_and_cluster && cfg.reorder)
    QUAMBA_CHECK(reordered == 0, "stage order violation: archive is already reordered");
  if (cfg.hadamard)
    QUAMBA_CHECK(!m.hadamard_rotated, "stage order violation: archive is already Hadamard-fused");
  if (cfg.n_state_groups != 0)
    QUAMBA_CHECK(cfg.n_state_groups == m.config.dims.n_state_groups,
                 "n_state_groups " + std::to_string(cfg.n_state_groups) +
                     " does not match the model's " +
                     std::to_string(m.config.dims.n_state_groups));
}

}  // namespace

QuantizeResult quantize_model(const FloatModel& model, const Tensor& calib_tokens,
                              const PipelineConfig& cfg, const StatsMap* pre_stats,
                              const PrecisionPlan* plan) {
  cfg.validate();
  model.validate();
  check_stage_order(model, cfg);
  const std::size_t nb = model.blocks.size();
  const auto& dims = model.config.dims;

  std::vector<Profile> profiles(nb);
  int emb_bits = cfg.embedding_bits, head_bits = cfg.head_bits;
  if (cfg.profile == "mixed") {
    QUAMBA_CHECK(plan != nullptr, "profile 'mixed' needs a precision plan");
    QUAMBA_CHECK(plan->blocks.size() == nb, "plan block count does not match the model");
    QUAMBA_CHECK(plan->feasible(), "plan exceeds its A16 budget");
    profiles = plan->blocks;
    for (auto p : profiles)
      QUAMBA_CHECK(p != Profile::W8A8, "mixed plans choose between W4A8 and W4A16");
    emb_bits = plan->embedding_bits;
    head_bits = plan->head_bits;
  } else {
    profiles.assign(nb, profile_from_name(cfg.profile));
  }
  bool any_a8 = cfg.profile == "mixed";
  for (auto p : profiles) any_a8 |= quantizes_activations(p);

  QuantizeResult res;
  FloatModel fm = model;

  // Sort-and-cluster on the original float model, then reorder.
  if (cfg.sort_and_cluster) {
    StatsMap computed;
    const StatsMap* stats = pre_stats;
    if (!stats) {
      CollectOptions co;
      co.sites = {Site::X};
      computed = collect_stats(fm, calib_tokens, co).stats;
      stats = &computed;
    }
    ClusterOptions copt;
    copt.m = cfg.m;
    copt.n = cfg.n;
    for (std::size_t i = 0; i < nb; ++i) {
      res.cluster_maps.push_back(
          sort_and_cluster(need(*stats, i, Site::X), dims.n_heads, dims.head_dim, copt));
      if (cfg.reorder)
        fm.blocks[i] = apply_reorder(fm.blocks[i], build_reorder_plan(res.cluster_maps[i], dims));
    }
  }
  if (cfg.hadamard) fm = rotate_model_hadamard(fm);

  // Statistics and GPTQ inputs of the transformed model.
  CollectOptions co;
  co.keep_values = cfg.clip_percentile.has_value();
  co.keep_inputs = cfg.gptq;
  const Calibration cal = collect_stats(fm, calib_tokens, co);

  QuantizedModel qm;
  qm.config = fm.config;
  qm.hadamard_rotated = fm.hadamard_rotated;
  for (std::size_t i = 0; i < nb; ++i) {
    const SsmBlockWeights& w = fm.blocks[i];
    const int bits = weight_bits(profiles[i]);
    auto input = [&](Site s) { return cfg.gptq ? &need_input(cal.inputs, i, s) : nullptr; };
    QTensor in_q = quantize_weight(w.in_proj, bits, cfg, input(Site::U), res.gptq_fallbacks);
    QTensor out_q = quantize_weight(w.out_proj, bits, cfg, input(Site::Y), res.gptq_fallbacks);
    std::optional<QTensor> x_q, dt_q;
    if (w.variant == Variant::Mamba1) {
      x_q = quantize_weight(w.x_proj, bits, cfg, input(Site::X), res.gptq_fallbacks);
      dt_q = quantize_weight(w.dt_proj, bits, cfg, input(Site::DtLow), res.gptq_fallbacks);
    }

    json info = json::object();
    std::optional<ActivationScales> act;
    if (any_a8) {
      ActivationScales a;
      a.u = per_tensor_from(need(cal.stats, i, Site::U));
      if (cfg.sort_and_cluster) {
        const ClusterMap& cm = res.cluster_maps[i];
        const auto cells = cm.cell_index(cfg.reorder);
        const std::size_t n_cells = cm.m() * cm.n();
        a.x = ScaleLayout::clustered(
            1, cells, cell_scales(need(cal.stats, i, Site::X).channel_max, cells, n_cells));
        a.state = ScaleLayout::clustered(
            0, cells, cell_scales(need(cal.stats, i, Site::State).channel_max, cells, n_cells));
        info["cluster_map"] = cm.to_json();
      } else {
        a.x = per_tensor_from(need(cal.stats, i, Site::X), cfg.clip_percentile);
        a.state = per_tensor_from(need(cal.stats, i, Site::State));
      }
      const CalibStats& sb = need(cal.stats, i, Site::B);
      const CalibStats& sc = need(cal.stats, i, Site::C);
      if (cfg.per_state_group) {
        const std::size_t groups = w.variant == Variant::Mamba2 ? dims.n_state_groups : 1;
        StateGroupScales sg = build_state_group_scales(sb, sc, groups, dims.d_state);
        if (a.state->kind == LayoutKind::Clustered) sg.scales_state = a.state->scales;
        a.b = ScaleLayout::per_state_group(sg.boundaries);
        a.b.scales = sg.scales_b;
        a.c = ScaleLayout::per_state_group(sg.boundaries);
        a.c.scales = sg.scales_c;
        info["state_groups"] = sg.to_json();
      } else {
        a.b = per_tensor_from(sb);
        a.c = per_tensor_from(sc);
      }
      a.z = per_tensor_from(need(cal.stats, i, Site::Z));
      a.dt = per_tensor_from(need(cal.stats, i, Site::Dt));
      a.dt_low = w.variant == Variant::Mamba1 ? per_tensor_from(need(cal.stats, i, Site::DtLow))
                                              : ScaleLayout::per_tensor(1.0f);
      a.y_out = calibrate_site_scale(need(cal.stats, i, Site::Y), 8);
      act = std::move(a);
    }
    if (w.reorder_perm) info["reorder_plan"] = ReorderPlan{*w.reorder_perm}.to_json();
    QuantizedBlock qb = make_quantized_block(w, std::move(in_q), std::move(out_q), std::move(x_q),
                                             std::move(dt_q), profiles[i], std::move(act));
    qb.info = std::move(info);
    qm.blocks.push_back(std::move(qb));
  }

  if (emb_bits < 16) {
    qm.embedding_q = quantize(fm.embedding, fit_scales(fm.embedding, ScaleLayout::per_row(), emb_bits),
                              emb_bits);
    qm.embedding = dequantize(*qm.embedding_q);
  } else {
    qm.embedding = fm.embedding;
  }
  if (head_bits < 16) {
    qm.head_q = rtn_quantize_weight(fm.head, head_bits, std::min(cfg.group_size, fm.head.dim(1)));
    qm.head = dequantize(*qm.head_q);
  } else {
    qm.head = fm.head;
  }
  qm.pipeline = cfg.to_json();
  res.model = std::move(qm);
  res.transformed = std::move(fm);
  return res;
}

Archive calibrate_model(const FloatModel& model, const Tensor& calib_tokens,
                        const PipelineConfig& cfg) {
  cfg.validate();
  const Calibration cal = collect_stats(model, calib_tokens);
  Archive a = stats_to_archive(cal.stats);
  const auto& d = model.config.dims;
  ClusterOptions copt;
  copt.m = cfg.m;
  copt.n = cfg.n;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const std::string prefix = "blocks." + std::to_string(i) + ".";
    const ClusterMap cm = sort_and_cluster(need(cal.stats, i, Site::X), d.n_heads, d.head_dim, copt);
    a.add_meta(prefix + "cluster_map", cm.to_json());
    a.add_meta(prefix + "reorder_plan", build_reorder_plan(cm, d).to_json());
    const std::size_t groups = model.config.variant == Variant::Mamba2 ? d.n_state_groups : 1;
    StateGroupScales sg = build_state_group_scales(need(cal.stats, i, Site::B),
                                                   need(cal.stats, i, Site::C), groups, d.d_state);
    const auto cells = cm.cell_index(false);
    sg.scales_state =
        cell_scales(need(cal.stats, i, Site::State).channel_max, cells, cm.m() * cm.n());
    a.add_meta(prefix + "state_groups", sg.to_json());
  }
  return a;
}

json EvalReport::to_json() const {
  return {{"schema_version", schema_version},
          {"tokens", {{"n_sequences", n_sequences}, {"seq_len", seq_len}}},
          {"profiles", profiles},
          {"block_mse", block_mse},
          {"logits", {{"mse", logits_mse},
                      {"sqnr_db", std::isfinite(sqnr_db) ? json(sqnr_db) : json(nullptr)},
                      {"argmax_agreement", argmax_agreement}}},
          {"bytes", {{"float", float_bytes},
                     {"quantized", quantized_bytes},
                     {"ratio", float_bytes ? double(quantized_bytes) / double(float_bytes) : 0.0}}},
          {"config", config}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.schema_version = j.at("schema_version").get<int>();
  QUAMBA_CHECK(r.schema_version == kSchemaVersion,
               "unsupported report schema version " + std::to_string(r.schema_version));
  r.n_sequences = j.at("tokens").at("n_sequences").get<std::size_t>();
  r.seq_len = j.at("tokens").at("seq_len").get<std::size_t>();
  r.profiles = j.at("profiles").get<std::vector<std::string>>();
  r.block_mse = j.at("block_mse").get<std::vector<double>>();
  const json& l = j.at("logits");
  r.logits_mse = l.at("mse").get<double>();
  r.sqnr_db = l.at("sqnr_db").is_null() ? std::numeric_limits<double>::infinity()
                                         : l.at("sqnr_db").get<double>();
  r.argmax_agreement = l.at("argmax_agreement").get<double>();
  r.float_bytes = j.at("bytes").at("float").get<std::size_t>();
  r.quantized_bytes = j.at("bytes").at("quantized").get<std::size_t>();
  r.config = j.at("config");
  return r;
}

namespace {

using Runner = std::function<Tensor(const Tokens&, std::vector<Tensor>*)>;

void unrotate(std::vector<Tensor>& residuals, bool rotated) {
  if (!rotated) return;
  for (auto& r : residuals) r = fwht(r, HadamardPlan::normalized(r.dim(1)));
}

EvalReport compare(const FloatModel& ref, const Runner& run, bool other_rotated,
                   const Tensor& tokens) {
  QUAMBA_CHECK(tokens.rank() == 2 && tokens.dim(0) >= 1, "empty evaluation token set");
  EvalReport rep;
  rep.n_sequences = tokens.dim(0);
  rep.seq_len = tokens.dim(1);
  rep.block_mse.assign(ref.blocks.size(), 0.0);
  std::vector<Tensor> ref_logits, test_logits;
  for (std::size_t r = 0; r < tokens.dim(0); ++r) {
    const Tokens row = token_row(tokens, r);
    std::vector<Tensor> ra, rb;
    ref_logits.push_back(model_forward(ref, row, {}, nullptr, &ra));
    test_logits.push_back(run(row, &rb));
    unrotate(ra, ref.hadamard_rotated);
    unrotate(rb, other_rotated);
    QUAMBA_CHECK(ra.size() == rb.size(), "models differ in block count");
    for (std::size_t b = 0; b < ra.size(); ++b)
      rep.block_mse[b] += mse(ra[b], rb[b]) / static_cast<double>(tokens.dim(0));
  }
  const Tensor a = concat_rows(ref_logits), b = concat_rows(test_logits);
  rep.logits_mse = mse(a, b);
  rep.sqnr_db = sqnr_db(a, b);
  rep.argmax_agreement = argmax_agreement(a, b);
  rep.float_bytes = archive_encode(float_model_to_archive(ref)).size();
  return rep;
}

void check_compatible(const ModelConfig& a, const ModelConfig& b) {
  QUAMBA_CHECK(a.variant == b.variant && a.dims == b.dims && a.n_blocks == b.n_blocks &&
                   a.vocab == b.vocab,
               "dim mismatch: the two archives describe different model geometries");
}

}  // namespace

EvalReport evaluate(const FloatModel& reference, const QuantizedModel& quantized,
                    const Tensor& tokens, const QuantModelOptions& opt) {
  check_compatible(reference.config, quantized.config);
  const Runner run = [&](const Tokens& t, std::vector<Tensor>* res) {
    return quantized_model_forward(quantized, t, opt, res);
  };
  EvalReport rep = compare(reference, run, quantized.hadamard_rotated, tokens);
  for (auto p : opt.profiles.value_or(quantized.profiles())) rep.profiles.push_back(profile_name(p));
  rep.quantized_bytes = archive_encode(quantized_model_to_archive(quantized)).size();
  rep.config = quantized.pipeline;
  return rep;
}

EvalReport evaluate(const FloatModel& reference, const FloatModel& other, const Tensor& tokens) {
  check_compatible(reference.config, other.config);
  const Runner run = [&](const Tokens& t, std::vector<Tensor>* res) {
    return model_forward(other, t, {}, nullptr, res);
  };
  EvalReport rep = compare(reference, run, other.hadamard_rotated, tokens);
  rep.profiles.assign(other.blocks.size(), "float");
  rep.quantized_bytes = archive_encode(float_model_to_archive(other)).size();
  return rep;
}

Archive toy_archive(const ToyConfig& toy, const CalibConfig& calib, std::size_t eval_samples) {
  Archive a = float_model_to_archive(generate_toy_model(toy));
  a.add("calib.tokens", generate_tokens(toy.vocab, calib.n_samples, calib.seq_len, calib.seed));
  a.add("eval.tokens", generate_tokens(toy.vocab, eval_samples, calib.seq_len,
                                       Rng::derive(toy.seed, 7, calib.seed).next_u64()));
  a.add_meta("toy.config", toy.to_json());
  return a;
}

}  // namespace quamba
