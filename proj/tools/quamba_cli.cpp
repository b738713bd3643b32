// quamba: toy-model generation, calibration, quantization, evaluation,
// precision search and archive inspection.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "quamba/archive.hpp"
#include "quamba/calibrate.hpp"
#include "quamba/error.hpp"
#include "quamba/model.hpp"
#include "quamba/pipeline.hpp"
#include "quamba/precision_search.hpp"
#include "quamba/toy_model.hpp"

using nlohmann::json;
using namespace quamba;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  QUAMBA_CHECK(in.good(), "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("invalid JSON in " + path + ": " + e.what());
  }
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  QUAMBA_CHECK(out.good(), "cannot write " + path);
  out << j.dump(2) << "\n";
  QUAMBA_CHECK(out.good(), "write failed: " + path);
}

Tensor split_tokens(const std::string& path, const std::string& split) {
  const Archive a = archive_read(path);
  const std::string name = split + ".tokens";
  QUAMBA_CHECK(a.contains(name), "no " + name + " entry in " + path);
  return a.tensor(name);
}

// Flag overrides on top of a PipelineConfig.
struct PipelineFlags {
  std::string config_path;
  std::optional<std::string> model, tokens, stats, plan, out, profile;
  std::optional<std::size_t> m, n, n_state_groups, group_size, calib_samples, seq_len;
  std::optional<std::uint64_t> calib_seed, seed;
  std::optional<float> clip_percentile, damp_ratio;
  std::optional<bool> per_group, gptq, hadamard, per_state_group, sort_and_cluster, reorder;
  std::optional<int> embedding_bits, head_bits;

  void add_to(CLI::App* app, bool quantize_flags) {
    app->add_option("--config", config_path, "pipeline config JSON");
    app->add_option("--model", model, "float model archive");
    app->add_option("--tokens", tokens, "token archive (default: the model archive)");
    app->add_option("--out", out, "output path");
    app->add_option("--m", m, "head groups for sort-and-cluster");
    app->add_option("--n", n, "channel groups for sort-and-cluster");
    app->add_option("--calib-samples", calib_samples);
    app->add_option("--seq-len", seq_len);
    app->add_option("--calib-seed", calib_seed);
    if (!quantize_flags) return;
    app->add_option("--stats", stats, "statistics archive from `calibrate`");
    app->add_option("--plan", plan, "precision plan JSON (profile mixed)");
    app->add_option("--profile", profile, "W8A8 | W4A8 | W4A16 | mixed");
    app->add_option("--n-state-groups", n_state_groups);
    app->add_option("--group-size", group_size);
    app->add_option("--clip-percentile", clip_percentile);
    app->add_option("--damp-ratio", damp_ratio);
    app->add_option("--seed", seed);
    app->add_option("--per-group", per_group, "on/off");
    app->add_option("--gptq", gptq, "on/off");
    app->add_option("--hadamard", hadamard, "on/off");
    app->add_option("--per-state-group", per_state_group, "on/off");
    app->add_option("--sort-and-cluster", sort_and_cluster, "on/off");
    app->add_option("--reorder", reorder, "on/off");
    app->add_option("--embedding-bits", embedding_bits, "4, 8 or 16 (float)");
    app->add_option("--head-bits", head_bits, "4, 8 or 16 (float)");
  }

  PipelineConfig resolve() const {
    PipelineConfig c = config_path.empty() ? PipelineConfig{}
                                           : PipelineConfig::from_json(read_json_file(config_path));
    auto set = [](auto& field, const auto& opt) {
      if (opt) field = *opt;
    };
    set(c.model_path, model);
    set(c.tokens_path, tokens);
    set(c.stats_path, stats);
    set(c.plan_path, plan);
    set(c.output_path, out);
    set(c.profile, profile);
    set(c.m, m);
    set(c.n, n);
    set(c.n_state_groups, n_state_groups);
    set(c.group_size, group_size);
    set(c.calib.n_samples, calib_samples);
    set(c.calib.seq_len, seq_len);
    set(c.calib.seed, calib_seed);
    set(c.seed, seed);
    if (clip_percentile) c.clip_percentile = *clip_percentile;
    set(c.damp_ratio, damp_ratio);
    set(c.per_group, per_group);
    set(c.gptq, gptq);
    set(c.hadamard, hadamard);
    set(c.per_state_group, per_state_group);
    set(c.sort_and_cluster, sort_and_cluster);
    set(c.reorder, reorder);
    set(c.embedding_bits, embedding_bits);
    set(c.head_bits, head_bits);
    c.validate();
    QUAMBA_CHECK(!c.model_path.empty(), "no model given (--model or model_path in --config)");
    QUAMBA_CHECK(!c.output_path.empty(), "no output given (--out or output_path in --config)");
    if (c.tokens_path.empty()) c.tokens_path = c.model_path;
    return c;
  }
};

Tensor pipeline_calib_tokens(const PipelineConfig& cfg, const ModelConfig& mc) {
  const Archive tokens = archive_read(cfg.tokens_path);
  return calibration_tokens(cfg, mc, &tokens);
}

int run(int argc, char** argv) {
  CLI::App app{"Post-training quantization for selective state-space models"};
  app.require_subcommand(1);

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "write a random toy model with calibration/eval tokens");
  std::string gen_out, gen_config;
  std::optional<std::string> gen_variant;
  std::optional<std::size_t> gen_blocks, gen_vocab, gen_samples, gen_seq, gen_eval;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--out", gen_out, "output archive")->required();
  gen->add_option("--config", gen_config, "toy config JSON");
  gen->add_option("--variant", gen_variant, "mamba1 | mamba2");
  gen->add_option("--blocks", gen_blocks);
  gen->add_option("--vocab", gen_vocab);
  gen->add_option("--seed", gen_seed);
  gen->add_option("--calib-samples", gen_samples);
  gen->add_option("--seq-len", gen_seq);
  gen->add_option("--eval-samples", gen_eval);

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "collect activation statistics and cluster maps");
  PipelineFlags cal_flags;
  cal_flags.add_to(cal, false);

  // quantize
  auto* quant = app.add_subcommand("quantize", "quantize a float model archive");
  PipelineFlags q_flags;
  q_flags.add_to(quant, true);
  std::string q_report;
  quant->add_option("--report", q_report, "also write an eval report JSON on eval.tokens");

  // eval
  auto* ev = app.add_subcommand("eval", "compare a quantized (or float) archive with the float model");
  std::string ev_float, ev_quant, ev_tokens, ev_plan, ev_out, ev_split = "eval";
  ev->add_option("--float", ev_float, "float model archive")->required();
  ev->add_option("--quant", ev_quant, "archive to evaluate")->required();
  ev->add_option("--tokens", ev_tokens, "token archive (default: the float archive)");
  ev->add_option("--split", ev_split, "eval | calib")->check(CLI::IsMember({"eval", "calib"}));
  ev->add_option("--plan", ev_plan, "precision plan JSON overriding block profiles");
  ev->add_option("--out", ev_out, "report path (default: stdout)");

  // search
  auto* se = app.add_subcommand("search", "evolutionary W4A8/W4A16 precision search");
  std::string se_float, se_quant, se_tokens, se_out, se_trace, se_config;
  std::size_t se_budget = 0;
  std::optional<std::size_t> se_pop, se_gen;
  std::optional<std::uint64_t> se_seed;
  se->add_option("--float", se_float, "float model archive")->required();
  se->add_option("--quant", se_quant, "W4A8 quantized archive")->required();
  se->add_option("--tokens", se_tokens, "token archive (default: the float archive)");
  se->add_option("--budget", se_budget, "number of blocks allowed at A16")->required();
  se->add_option("--config", se_config, "search config JSON");
  se->add_option("--population", se_pop);
  se->add_option("--generations", se_gen);
  se->add_option("--seed", se_seed);
  se->add_option("--out", se_out, "plan JSON")->required();
  se->add_option("--trace", se_trace, "fitness trace JSON");

  // inspect
  auto* in = app.add_subcommand("inspect", "print an archive's manifest and model summary");
  std::string in_path;
  in->add_option("archive", in_path)->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    ToyConfig toy = gen_config.empty() ? ToyConfig{} : ToyConfig::from_json(read_json_file(gen_config));
    if (gen_variant) {
      toy.variant = variant_from_name(*gen_variant);
      if (gen_config.empty()) toy.dims = BlockDims::defaults(toy.variant);
    }
    if (gen_blocks) toy.n_blocks = *gen_blocks;
    if (gen_vocab) toy.vocab = *gen_vocab;
    if (gen_seed) toy.seed = *gen_seed;
    CalibConfig calib;
    if (gen_samples) calib.n_samples = *gen_samples;
    if (gen_seq) calib.seq_len = *gen_seq;
    archive_write(toy_archive(toy, calib, gen_eval.value_or(8)), gen_out);
    std::cerr << "wrote " << gen_out << "\n";
  } else if (*cal) {
    const PipelineConfig cfg = cal_flags.resolve();
    const FloatModel fm = float_model_from_archive(archive_read(cfg.model_path));
    archive_write(calibrate_model(fm, pipeline_calib_tokens(cfg, fm.config), cfg), cfg.output_path);
    std::cerr << "wrote " << cfg.output_path << "\n";
  } else if (*quant) {
    const PipelineConfig cfg = q_flags.resolve();
    const FloatModel fm = float_model_from_archive(archive_read(cfg.model_path));
    std::optional<StatsMap> stats;
    if (!cfg.stats_path.empty()) stats = stats_from_archive(archive_read(cfg.stats_path));
    std::optional<PrecisionPlan> plan;
    if (!cfg.plan_path.empty()) plan = PrecisionPlan::from_json(read_json_file(cfg.plan_path));
    const QuantizeResult r = quantize_model(fm, pipeline_calib_tokens(cfg, fm.config), cfg,
                                            stats ? &*stats : nullptr, plan ? &*plan : nullptr);
    archive_write(quantized_model_to_archive(r.model), cfg.output_path);
    if (r.gptq_fallbacks)
      std::cerr << "warning: " << r.gptq_fallbacks
                << " projection(s) fell back to round-to-nearest (singular Hessian)\n";
    if (!q_report.empty())
      write_json(evaluate(fm, r.model, split_tokens(cfg.tokens_path, "eval")).to_json(), q_report);
    std::cerr << "wrote " << cfg.output_path << "\n";
  } else if (*ev) {
    const FloatModel fm = float_model_from_archive(archive_read(ev_float));
    const Tensor tokens = split_tokens(ev_tokens.empty() ? ev_float : ev_tokens, ev_split);
    const Archive other = archive_read(ev_quant);
    EvalReport rep;
    if (is_quantized_archive(other)) {
      QuantModelOptions opt;
      if (!ev_plan.empty()) opt.profiles = PrecisionPlan::from_json(read_json_file(ev_plan)).blocks;
      rep = evaluate(fm, quantized_model_from_archive(other), tokens, opt);
    } else {
      QUAMBA_CHECK(ev_plan.empty(), "--plan needs a quantized archive");
      rep = evaluate(fm, float_model_from_archive(other), tokens);
    }
    write_json(rep.to_json(), ev_out);
  } else if (*se) {
    SearchConfig sc = se_config.empty() ? SearchConfig{} : SearchConfig::from_json(read_json_file(se_config));
    if (se_pop) sc.population = *se_pop;
    if (se_gen) sc.generations = *se_gen;
    if (se_seed) sc.seed = *se_seed;
    sc.validate();
    const FloatModel fm = float_model_from_archive(archive_read(se_float));
    const QuantizedModel qm = quantized_model_from_archive(archive_read(se_quant));
    const Tensor tokens = split_tokens(se_tokens.empty() ? se_float : se_tokens, "eval");
    FitnessEvaluator eval(fm, qm, tokens);
    const SearchResult r = evolve(eval, se_budget, sc);
    json plan = r.plan.to_json();
    plan["fitness"] = r.fitness;
    plan["search"] = sc.to_json();
    write_json(plan, se_out);
    if (!se_trace.empty()) write_json(r.trace.to_json(), se_trace);
  } else if (*in) {
    const Archive a = archive_read(in_path);
    json entries = json::array();
    const auto bytes = archive_encode(a);
    for (const auto& [name, value] : a.entries()) {
      json e = {{"name", name}, {"dtype", dtype_name(value_dtype(value))}};
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, json>)
              e["shape"] = json::array({v.dump().size()});
            else if constexpr (std::is_same_v<T, Tensor>)
              e["shape"] = v.shape();
            else
              e["shape"] = v.shape;
          },
          value);
      entries.push_back(std::move(e));
    }
    json out = {{"path", in_path}, {"bytes", bytes.size()}, {"entries", entries}};
    if (a.contains("model.config")) out["model"] = a.meta("model.config");
    if (a.contains("calibration")) out["calibration"] = a.meta("calibration");
    write_json(out, "-");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
