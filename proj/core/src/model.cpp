#include "quamba/model.hpp"

#include <cmath>

#include "quamba/error.hpp"
#include "quamba/hadamard.hpp"

namespace quamba {

using nlohmann::json;

void ModelConfig::validate() const {
  dims.validate(variant);
  QUAMBA_CHECK(n_blocks >= 1, "model needs at least one block");
  QUAMBA_CHECK(vocab >= 2, "vocab must be at least 2");
}

json ModelConfig::to_json() const {
  return {{"variant", variant_name(variant)},
          {"dims", dims.to_json()},
          {"n_blocks", n_blocks},
          {"vocab", vocab}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.dims = BlockDims::from_json(j.at("dims"));
  c.n_blocks = j.at("n_blocks").get<std::size_t>();
  c.vocab = j.at("vocab").get<std::size_t>();
  c.validate();
  return c;
}

void FloatModel::validate() const {
  config.validate();
  const Shape table{config.vocab, config.dims.d_model};
  QUAMBA_CHECK(embedding.shape() == table, "embedding must be " + shape_to_string(table));
  QUAMBA_CHECK(head.shape() == table, "head must be " + shape_to_string(table));
  QUAMBA_CHECK(blocks.size() == config.n_blocks, "block count does not match config");
  for (const auto& b : blocks) {
    QUAMBA_CHECK(b.variant == config.variant && b.dims == config.dims,
                 "block geometry does not match config");
    QUAMBA_CHECK(b.hadamard_fused == hadamard_rotated,
                 "block Hadamard flag does not match the model rotation flag");
    b.validate();
  }
}

Tokens token_row(const Tensor& tokens, std::size_t r) {
  QUAMBA_CHECK(tokens.rank() == 2 && r < tokens.dim(0), "token row out of range");
  Tokens out;
  out.reserve(tokens.dim(1));
  for (float v : tokens.row(r)) {
    QUAMBA_CHECK(v >= 0 && v == std::floor(v), "token ids must be non-negative integers");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  return out;
}

namespace {

Tensor embed(const Tensor& table, std::span<const std::uint32_t> tokens) {
  const std::size_t d = table.dim(1);
  Tensor h({tokens.size(), d});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    QUAMBA_CHECK(tokens[t] < table.dim(0), "token id " + std::to_string(tokens[t]) +
                                               " outside vocab of " +
                                               std::to_string(table.dim(0)));
    std::copy(table.row(tokens[t]).begin(), table.row(tokens[t]).end(), h.row(t).begin());
  }
  return h;
}

void add_inplace(Tensor& h, const Tensor& delta) {
  for (std::size_t i = 0; i < h.numel(); ++i) h[i] += delta[i];
}

}  // namespace

Tensor model_forward(const FloatModel& m, std::span<const std::uint32_t> tokens,
                     const ForwardOptions& opt, const ModelObserver* observer,
                     std::vector<Tensor>* residuals) {
  Tensor h = embed(m.embedding, tokens);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    Observer obs;
    if (observer) obs = [&](Site s, const Tensor& v) { (*observer)(i, s, v); };
    add_inplace(h, block_forward_float(h, m.blocks[i], opt, nullptr, observer ? &obs : nullptr));
    if (residuals) residuals->push_back(h);
  }
  return linear(h, m.head);
}

FloatModel rotate_model_hadamard(const FloatModel& m) {
  QUAMBA_CHECK(!m.hadamard_rotated, "model is already Hadamard-rotated");
  const auto& d = m.config.dims;
  QUAMBA_CHECK(is_power_of_two(d.d_model) && is_power_of_two(d.d_inner),
               "Hadamard fusion needs power-of-two d_model and d_inner");
  FloatModel r = m;
  const HadamardPlan plan = HadamardPlan::normalized(d.d_model);
  r.embedding = fwht(m.embedding, plan);
  r.head = fwht(m.head, plan);
  for (auto& b : r.blocks) {
    b.in_proj = fuse_hadamard_in_proj(b.in_proj);
    b.out_proj = fuse_hadamard_out_proj(b.out_proj, d.d_inner, d.d_model);
    b.hadamard_fused = true;
  }
  r.hadamard_rotated = true;
  return r;
}

std::vector<Profile> QuantizedModel::profiles() const {
  std::vector<Profile> p;
  for (const auto& b : blocks) p.push_back(b.profile);
  return p;
}

Tensor quantized_model_forward(const QuantizedModel& m, std::span<const std::uint32_t> tokens,
                               const QuantModelOptions& opt, std::vector<Tensor>* residuals) {
  if (opt.profiles)
    QUAMBA_CHECK(opt.profiles->size() == m.blocks.size(),
                 "plan has " + std::to_string(opt.profiles->size()) + " blocks, model has " +
                     std::to_string(m.blocks.size()));
  Tensor h = embed(m.embedding, tokens);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    QuantForwardOptions bo;
    if (opt.profiles) bo.profile = (*opt.profiles)[i];
    bo.quantize_cached_state = opt.quantize_cached_state;
    bo.ssd_chunk = opt.ssd_chunk;
    add_inplace(h, block_forward_quantized(h, m.blocks[i], bo));
    if (residuals) residuals->push_back(h);
  }
  return linear(h, m.head);
}

namespace {

std::string block_key(std::size_t i, const std::string& name) {
  return "blocks." + std::to_string(i) + "." + name;
}

json block_meta(const SsmBlockWeights& w) {
  json j = {{"head_group", w.head_group}, {"hadamard_fused", w.hadamard_fused}};
  j["reorder_perm"] = w.reorder_perm ? json(*w.reorder_perm) : json(nullptr);
  return j;
}

void read_block_meta(const json& j, SsmBlockWeights& w) {
  w.head_group = j.at("head_group").get<std::vector<std::size_t>>();
  w.hadamard_fused = j.at("hadamard_fused").get<bool>();
  if (!j.at("reorder_perm").is_null())
    w.reorder_perm = j.at("reorder_perm").get<std::vector<std::size_t>>();
}

struct NamedParam {
  const char* name;
  Tensor SsmBlockWeights::*field;
};

constexpr NamedParam kSmallParams[] = {
    {"conv_weight", &SsmBlockWeights::conv_weight}, {"conv_bias", &SsmBlockWeights::conv_bias},
    {"a_log", &SsmBlockWeights::a_log},             {"d_param", &SsmBlockWeights::d_param},
    {"dt_bias", &SsmBlockWeights::dt_bias},         {"norm_weight", &SsmBlockWeights::norm_weight},
};

constexpr NamedParam kProjections[] = {
    {"in_proj", &SsmBlockWeights::in_proj},
    {"x_proj", &SsmBlockWeights::x_proj},
    {"dt_proj", &SsmBlockWeights::dt_proj},
    {"out_proj", &SsmBlockWeights::out_proj},
};

bool has_projection(Variant v, const std::string& name) {
  return v == Variant::Mamba1 || (name != "x_proj" && name != "dt_proj");
}

void put_small_params(Archive& a, std::size_t i, const SsmBlockWeights& w) {
  for (const auto& p : kSmallParams) a.add(block_key(i, p.name), w.*(p.field));
  a.add_meta(block_key(i, "meta"), block_meta(w));
}

SsmBlockWeights get_small_params(const Archive& a, std::size_t i, const ModelConfig& c) {
  SsmBlockWeights w;
  w.variant = c.variant;
  w.dims = c.dims;
  for (const auto& p : kSmallParams) w.*(p.field) = a.tensor(block_key(i, p.name));
  read_block_meta(a.meta(block_key(i, "meta")), w);
  return w;
}

ModelConfig read_config(const Archive& a, const std::string& expected_format) {
  QUAMBA_CHECK(a.contains("model.config"), "archive has no model.config entry");
  const json& j = a.meta("model.config");
  const std::string fmt = j.value("format", "");
  QUAMBA_CHECK(fmt == expected_format,
               "expected a " + expected_format + " model archive, found '" + fmt + "'");
  return ModelConfig::from_json(j);
}

}  // namespace

std::string archive_model_format(const Archive& a) {
  QUAMBA_CHECK(a.contains("model.config"), "archive has no model.config entry");
  return a.meta("model.config").value("format", "");
}

bool is_quantized_archive(const Archive& a) { return archive_model_format(a) == "quantized"; }

Archive float_model_to_archive(const FloatModel& m) {
  m.validate();
  Archive a;
  json cfg = m.config.to_json();
  cfg["format"] = "float";
  cfg["hadamard_rotated"] = m.hadamard_rotated;
  a.add_meta("model.config", cfg);
  a.add("embedding", m.embedding);
  a.add("head", m.head);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const auto& w = m.blocks[i];
    for (const auto& p : kProjections)
      if (has_projection(w.variant, p.name)) a.add(block_key(i, p.name), w.*(p.field));
    put_small_params(a, i, w);
  }
  return a;
}

FloatModel float_model_from_archive(const Archive& a) {
  FloatModel m;
  m.config = read_config(a, "float");
  m.hadamard_rotated = a.meta("model.config").value("hadamard_rotated", false);
  m.embedding = a.tensor("embedding");
  m.head = a.tensor("head");
  for (std::size_t i = 0; i < m.config.n_blocks; ++i) {
    SsmBlockWeights w = get_small_params(a, i, m.config);
    for (const auto& p : kProjections)
      if (has_projection(w.variant, p.name)) w.*(p.field) = a.tensor(block_key(i, p.name));
    m.blocks.push_back(std::move(w));
  }
  m.validate();
  return m;
}

Archive quantized_model_to_archive(const QuantizedModel& m) {
  Archive a;
  json cfg = m.config.to_json();
  cfg["format"] = "quantized";
  cfg["hadamard_rotated"] = m.hadamard_rotated;
  json profiles = json::array();
  for (auto p : m.profiles()) profiles.push_back(profile_name(p));
  cfg["profiles"] = profiles;
  cfg["embedding_bits"] = m.embedding_bits();
  cfg["head_bits"] = m.head_bits();
  cfg["pipeline"] = m.pipeline;
  a.add_meta("model.config", cfg);
  if (m.embedding_q)
    put_qtensor(a, "embedding", *m.embedding_q);
  else
    a.add("embedding", m.embedding);
  if (m.head_q)
    put_qtensor(a, "head", *m.head_q);
  else
    a.add("head", m.head);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const auto& qb = m.blocks[i];
    put_qtensor(a, block_key(i, "in_proj"), qb.in_proj);
    put_qtensor(a, block_key(i, "out_proj"), qb.out_proj);
    if (qb.x_proj) put_qtensor(a, block_key(i, "x_proj"), *qb.x_proj);
    if (qb.dt_proj) put_qtensor(a, block_key(i, "dt_proj"), *qb.dt_proj);
    put_small_params(a, i, qb.base);
    if (qb.act) a.add_meta(block_key(i, "act_scales"), qb.act->to_json());
    a.add_meta(block_key(i, "info"), qb.info);
  }
  return a;
}

QuantizedModel quantized_model_from_archive(const Archive& a) {
  QuantizedModel m;
  m.config = read_config(a, "quantized");
  const json& cfg = a.meta("model.config");
  m.hadamard_rotated = cfg.value("hadamard_rotated", false);
  m.pipeline = cfg.value("pipeline", json::object());
  const auto profiles = cfg.at("profiles").get<std::vector<std::string>>();
  QUAMBA_CHECK(profiles.size() == m.config.n_blocks, "profile count does not match n_blocks");
  auto table = [&](const std::string& name, Tensor& deq, std::optional<QTensor>& q) {
    if (a.contains(name + ".layout")) {
      q = get_qtensor(a, name);
      deq = dequantize(*q);
    } else {
      deq = a.tensor(name);
    }
  };
  table("embedding", m.embedding, m.embedding_q);
  table("head", m.head, m.head_q);
  for (std::size_t i = 0; i < m.config.n_blocks; ++i) {
    SsmBlockWeights w = get_small_params(a, i, m.config);
    std::optional<QTensor> xq, dq;
    if (m.config.variant == Variant::Mamba1) {
      xq = get_qtensor(a, block_key(i, "x_proj"));
      dq = get_qtensor(a, block_key(i, "dt_proj"));
    }
    std::optional<ActivationScales> act;
    if (a.contains(block_key(i, "act_scales")))
      act = ActivationScales::from_json(a.meta(block_key(i, "act_scales")));
    QuantizedBlock qb = make_quantized_block(w, get_qtensor(a, block_key(i, "in_proj")),
                                             get_qtensor(a, block_key(i, "out_proj")), xq, dq,
                                             profile_from_name(profiles[i]), std::move(act));
    if (a.contains(block_key(i, "info"))) qb.info = a.meta(block_key(i, "info"));
    m.blocks.push_back(std::move(qb));
  }
  return m;
}

}  // namespace quamba
