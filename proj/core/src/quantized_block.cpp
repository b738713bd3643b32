#include "quamba/quantized_block.hpp"

#include "block_runtime.hpp"
#include "quamba/error.hpp"
#include "quamba/hadamard.hpp"

namespace quamba {

using nlohmann::json;

const char* profile_name(Profile p) {
  switch (p) {
    case Profile::W8A8: return "W8A8";
    case Profile::W4A8: return "W4A8";
    case Profile::W4A16: return "W4A16";
  }
  return "?";
}

Profile profile_from_name(const std::string& name) {
  for (auto p : {Profile::W8A8, Profile::W4A8, Profile::W4A16})
    if (name == profile_name(p)) return p;
  throw Error("unknown profile '" + name + "' (expected W8A8, W4A8 or W4A16)");
}

int weight_bits(Profile p) { return p == Profile::W8A8 ? 8 : 4; }

bool quantizes_activations(Profile p) { return p != Profile::W4A16; }

namespace {

json layout_json(const ScaleLayout& l) {
  json j = l.descriptor();
  j["scales"] = l.scales;
  return j;
}

ScaleLayout layout_from(const json& j) {
  return ScaleLayout::from_descriptor(j, j.at("scales").get<std::vector<float>>());
}

}  // namespace

json ActivationScales::to_json() const {
  json j = {{"u", layout_json(u)},   {"x", layout_json(x)},   {"B", layout_json(b)},
            {"C", layout_json(c)},   {"z", layout_json(z)},   {"dt", layout_json(dt)},
            {"dt_low", layout_json(dt_low)}, {"y_out", y_out}};
  if (state) j["state"] = layout_json(*state);
  return j;
}

ActivationScales ActivationScales::from_json(const json& j) {
  ActivationScales a;
  a.u = layout_from(j.at("u"));
  a.x = layout_from(j.at("x"));
  a.b = layout_from(j.at("B"));
  a.c = layout_from(j.at("C"));
  a.z = layout_from(j.at("z"));
  a.dt = layout_from(j.at("dt"));
  a.dt_low = layout_from(j.at("dt_low"));
  a.y_out = j.at("y_out").get<float>();
  if (j.contains("state")) a.state = layout_from(j.at("state"));
  return a;
}

std::size_t QuantizedBlock::storage_bytes() const {
  std::size_t n = in_proj.storage_bytes() + out_proj.storage_bytes();
  if (x_proj) n += x_proj->storage_bytes();
  if (dt_proj) n += dt_proj->storage_bytes();
  for (const Tensor* t : {&base.conv_weight, &base.conv_bias, &base.a_log, &base.d_param,
                          &base.dt_bias, &base.norm_weight})
    n += t->numel() * sizeof(float);
  return n;
}

QuantizedBlock make_quantized_block(const SsmBlockWeights& w, QTensor in_proj, QTensor out_proj,
                                    std::optional<QTensor> x_proj, std::optional<QTensor> dt_proj,
                                    Profile profile, std::optional<ActivationScales> act) {
  // Float projections may be absent (archive loading); base.validate() below
  // checks the dequantized shapes against the block geometry.
  if (!w.in_proj.empty())
    QUAMBA_CHECK(in_proj.shape() == w.in_proj.shape(), "quantized in_proj shape mismatch");
  if (!w.out_proj.empty())
    QUAMBA_CHECK(out_proj.shape() == w.out_proj.shape(), "quantized out_proj shape mismatch");
  if (w.variant == Variant::Mamba1)
    QUAMBA_CHECK(x_proj && dt_proj, "Mamba1 blocks need quantized x_proj and dt_proj");
  if (quantizes_activations(profile))
    QUAMBA_CHECK(act.has_value(), std::string("missing calibration: ") + profile_name(profile) +
                                      " needs activation scales");
  QuantizedBlock qb;
  qb.base = w;
  qb.base.in_proj = dequantize(in_proj);
  qb.base.out_proj = dequantize(out_proj);
  if (x_proj) qb.base.x_proj = dequantize(*x_proj);
  if (dt_proj) qb.base.dt_proj = dequantize(*dt_proj);
  qb.in_proj = std::move(in_proj);
  qb.out_proj = std::move(out_proj);
  qb.x_proj = std::move(x_proj);
  qb.dt_proj = std::move(dt_proj);
  qb.profile = profile;
  qb.act = std::move(act);
  qb.base.validate();
  return qb;
}

namespace {

class QuantHooks final : public detail::SiteHooks {
 public:
  QuantHooks(const ActivationScales* act, bool a8, bool quantize_state)
      : act_(act), a8_(a8), quantize_state_(quantize_state) {}

  Tensor activation(Site s, Tensor v) const override {
    if (!a8_) return v;
    const ScaleLayout* l = nullptr;
    switch (s) {
      case Site::U: l = &act_->u; break;
      case Site::X: l = &act_->x; break;
      case Site::B: l = &act_->b; break;
      case Site::C: l = &act_->c; break;
      case Site::Z: l = &act_->z; break;
      case Site::Dt: l = &act_->dt; break;
      case Site::DtLow: l = &act_->dt_low; break;
      default: return v;
    }
    return fake_quantize(v, *l, 8);
  }

  Tensor out_proj_input(const Tensor& y, bool hadamard) const override {
    if (!a8_) return SiteHooks::out_proj_input(y, hadamard);
    if (!hadamard) return fake_quantize(y, ScaleLayout::per_tensor(act_->y_out), 8);
    HadamardPlan plan = HadamardPlan::normalized(y.dim(1));
    plan.fused_output_scale = act_->y_out;
    return dequantize(hadamard_quantize(y, plan, 8));
  }

  void cache_state(Tensor& h) const override {
    if (quantize_state_ && act_ && act_->state) h = fake_quantize(h, *act_->state, 8);
  }

 private:
  const ActivationScales* act_;
  bool a8_;
  bool quantize_state_;
};

}  // namespace

Tensor block_forward_quantized(const Tensor& u, const QuantizedBlock& qb,
                               const QuantForwardOptions& opt, SsmState* state) {
  const Profile profile = opt.profile.value_or(qb.profile);
  const bool a8 = quantizes_activations(profile);
  QUAMBA_CHECK(!a8 || qb.act.has_value(), std::string("missing calibration: ") +
                                              profile_name(profile) + " needs activation scales");
  QUAMBA_CHECK(weight_bits(profile) == qb.in_proj.bits(),
               std::string("bits/layout mismatch: ") + profile_name(profile) + " on " +
                   std::to_string(qb.in_proj.bits()) + "-bit weights");
  if (opt.quantize_cached_state)
    QUAMBA_CHECK(qb.act && qb.act->state, "missing calibration: no cached-state scales");
  const QuantHooks hooks(qb.act ? &*qb.act : nullptr, a8, opt.quantize_cached_state);
  ForwardOptions fopt;
  fopt.ssd_chunk = opt.ssd_chunk;
  return detail::run_block(u, qb.base, detail::float_tensors(qb.base), hooks, fopt, state,
                           nullptr);
}

}  // namespace quamba
