#include "quamba/reorder.hpp"

#include "quamba/error.hpp"

namespace quamba {

using nlohmann::json;

bool ReorderPlan::is_identity() const {
  for (std::size_t i = 0; i < perm.size(); ++i)
    if (perm[i] != i) return false;
  return true;
}

ReorderPlan ReorderPlan::inverse() const {
  ReorderPlan r;
  r.perm.resize(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) r.perm[perm[i]] = i;
  return r;
}

json ReorderPlan::to_json() const { return {{"perm", perm}}; }

ReorderPlan ReorderPlan::from_json(const json& j) {
  return {j.at("perm").get<std::vector<std::size_t>>()};
}

ReorderPlan build_reorder_plan(const ClusterMap& cmap, const BlockDims& dims) {
  cmap.validate();
  QUAMBA_CHECK(cmap.n_heads * cmap.head_dim == dims.d_inner,
               "cluster map covers " + std::to_string(cmap.n_heads * cmap.head_dim) +
                   " channels, block has " + std::to_string(dims.d_inner));
  QUAMBA_CHECK(cmap.n_heads == dims.n_heads && cmap.head_dim == dims.head_dim,
               "cluster map head geometry does not match the block");
  ReorderPlan plan;
  plan.perm.resize(dims.d_inner);
  for (std::size_t hn = 0; hn < cmap.n_heads; ++hn) {
    const std::size_t ho = cmap.head_perm[hn];
    for (std::size_t p = 0; p < cmap.head_dim; ++p)
      plan.perm[hn * cmap.head_dim + p] = ho * cmap.head_dim + cmap.channel_perm[ho][p];
  }
  return plan;
}

namespace {

// Row i of the result is row src[i - begin] of rows [begin, begin + len).
void permute_rows(Tensor& t, std::size_t begin, const std::vector<std::size_t>& src) {
  const Tensor orig = t;
  const std::size_t w = t.numel() / t.dim(0);
  for (std::size_t i = 0; i < src.size(); ++i)
    std::copy_n(orig.data().begin() + static_cast<std::ptrdiff_t>((begin + src[i]) * w), w,
                t.data().begin() + static_cast<std::ptrdiff_t>((begin + i) * w));
}

void permute_cols(Tensor& t, const std::vector<std::size_t>& src) {
  const Tensor orig = t;
  for (std::size_t r = 0; r < t.dim(0); ++r)
    for (std::size_t i = 0; i < src.size(); ++i) t.at(r, i) = orig.at(r, src[i]);
}

template <typename T>
std::vector<T> permuted(const std::vector<T>& v, const std::vector<std::size_t>& src) {
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = v[src[i]];
  return out;
}

// Head permutation implied by a channel permutation that moves whole heads.
std::vector<std::size_t> head_perm_of(const std::vector<std::size_t>& perm, const BlockDims& d) {
  std::vector<std::size_t> hp(d.n_heads);
  for (std::size_t hn = 0; hn < d.n_heads; ++hn) {
    hp[hn] = perm[hn * d.head_dim] / d.head_dim;
    for (std::size_t p = 0; p < d.head_dim; ++p)
      QUAMBA_CHECK(perm[hn * d.head_dim + p] / d.head_dim == hp[hn],
                   "Mamba2 reordering must keep each head's channels together");
  }
  return hp;
}

SsmBlockWeights permute_block(const SsmBlockWeights& w, const std::vector<std::size_t>& perm) {
  const auto& d = w.dims;
  SsmBlockWeights r = w;
  permute_rows(r.in_proj, 0, perm);
  permute_rows(r.in_proj, d.d_inner, perm);
  permute_rows(r.conv_weight, 0, perm);
  permute_rows(r.conv_bias, 0, perm);
  permute_rows(r.norm_weight, 0, perm);
  permute_cols(r.out_proj, perm);
  if (w.variant == Variant::Mamba2) {
    const auto hp = head_perm_of(perm, d);
    permute_rows(r.in_proj, 2 * d.d_inner + 2 * d.bc_width(), hp);
    permute_rows(r.a_log, 0, hp);
    permute_rows(r.d_param, 0, hp);
    permute_rows(r.dt_bias, 0, hp);
    r.head_group = permuted(w.head_group, hp);
  } else {
    permute_cols(r.x_proj, perm);
    permute_rows(r.dt_proj, 0, perm);
    permute_rows(r.a_log, 0, perm);
    permute_rows(r.d_param, 0, perm);
    permute_rows(r.dt_bias, 0, perm);
  }
  return r;
}

void check_perm(const std::vector<std::size_t>& perm, std::size_t n) {
  QUAMBA_CHECK(perm.size() == n, "reorder plan has " + std::to_string(perm.size()) +
                                     " entries, block has " + std::to_string(n) + " channels");
  std::vector<bool> seen(n, false);
  for (auto v : perm) {
    QUAMBA_CHECK(v < n && !seen[v], "reorder plan is not a permutation");
    seen[v] = true;
  }
}

}  // namespace

SsmBlockWeights apply_reorder(const SsmBlockWeights& w, const ReorderPlan& plan) {
  QUAMBA_CHECK(!w.reorder_perm, "block is already reordered; refusing to apply a second plan");
  QUAMBA_CHECK(!w.hadamard_fused, "stage order violation: reorder must precede Hadamard fusion");
  w.validate();
  check_perm(plan.perm, w.dims.d_inner);
  SsmBlockWeights r = permute_block(w, plan.perm);
  r.reorder_perm = plan.perm;
  return r;
}

SsmBlockWeights invert_reorder(const SsmBlockWeights& w) {
  QUAMBA_CHECK(w.reorder_perm.has_value(), "block is not reordered");
  QUAMBA_CHECK(!w.hadamard_fused, "cannot undo reordering of a Hadamard-fused block");
  const ReorderPlan inv = ReorderPlan{*w.reorder_perm}.inverse();
  SsmBlockWeights r = permute_block(w, inv.perm);
  r.reorder_perm.reset();
  return r;
}

}  // namespace quamba
