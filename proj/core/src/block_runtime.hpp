#pragma once

// Shared block evaluation used by the float reference and the quantized path.
// The quantized path supplies dequantized weights and hooks that quantize
// activations at each site; the float path uses the identity hooks.

#include "quamba/ssm_block.hpp"

namespace quamba::detail {

struct BlockTensors {
  const Tensor* in_proj;
  const Tensor* x_proj;   // Mamba1
  const Tensor* dt_proj;  // Mamba1
  const Tensor* out_proj;
};

BlockTensors float_tensors(const SsmBlockWeights& w);

class SiteHooks {
 public:
  virtual ~SiteHooks() = default;
  virtual Tensor activation(Site, Tensor v) const { return v; }
  // Takes the gated, normalized SSM output and returns what out_proj consumes.
  virtual Tensor out_proj_input(const Tensor& y, bool hadamard) const;
  // Applied to the recurrent state before it is cached for the next call.
  virtual void cache_state(Tensor& /*h*/) const {}
};

Tensor run_block(const Tensor& u, const SsmBlockWeights& w, const BlockTensors& tensors,
                 const SiteHooks& hooks, const ForwardOptions& opt, SsmState* state,
                 const Observer* observer);

}  // namespace quamba::detail
