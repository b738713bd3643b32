#pragma once

// Brute-force reference implementations used as test oracles. Nothing here
// calls into the library's numeric code.

#include <cstdint>
#include <vector>

#include "quamba/calibrate.hpp"
#include "quamba/ssm_block.hpp"
#include "quamba/tensor.hpp"

namespace oracle {

using quamba::Tensor;

Tensor random_tensor(quamba::Shape shape, std::uint64_t seed, double sd = 1.0);

// Triple loop, double accumulator, ascending k.
Tensor naive_matmul(const Tensor& a, const Tensor& b);

// Integer ±1 Sylvester matrix built by H_2n = [[H, H], [H, -H]].
std::vector<std::vector<int>> sylvester(std::size_t n);

// Rows of v multiplied by H_nᵀ (= H_n), optionally scaled by 1/√n. Double math.
Tensor dense_hadamard(const Tensor& v, bool normalized);

// Per-timestep recurrence in double, straight from the raw parameters:
// Δ = softplus(dt_raw + dt_bias), Ȧ = exp(Δ·A), h = Ȧh + ΔBx, y = Ch + Dx,
// then y·SiLU(z) when z is non-empty. a is [units × k]; b, c [T × groups·d_state].
Tensor naive_scan(const Tensor& x, const Tensor& dt_raw, const Tensor& dt_bias, const Tensor& a,
                  const Tensor& b, const Tensor& c, const Tensor& d, const Tensor& z,
                  std::size_t head_dim, std::size_t d_state, bool per_channel_dt,
                  const std::vector<std::size_t>& head_group, Tensor* h_final = nullptr);

// Labels of the 2-partition of `points` with the lowest within-cluster SSE,
// found by enumerating every split. Point 0 always gets label 0.
std::vector<int> best_two_clustering(const std::vector<std::vector<double>>& points);

// A block with unstructured random weights (no outliers, no clustering).
quamba::SsmBlockWeights random_block(quamba::Variant v, const quamba::BlockDims& dims,
                                     std::uint64_t seed);

// Random permutations and random (strictly increasing) group bounds.
quamba::ClusterMap random_cluster_map(std::size_t n_heads, std::size_t head_dim, std::size_t m,
                                      std::size_t n, std::uint64_t seed);

// Applies an x-channel permutation (perm[new] = old) to every channel-indexed
// parameter. Mamba2 permutations must move whole heads plus channels within a
// head; per-head parameters follow the head of each new channel.
quamba::SsmBlockWeights permute_channels(const quamba::SsmBlockWeights& w,
                                         const std::vector<std::size_t>& perm);

// A head permutation composed with random within-head permutations.
std::vector<std::size_t> random_head_consistent_perm(std::size_t n_heads, std::size_t head_dim,
                                                     std::uint64_t seed);

// max |a − b| / max |b|.
double max_rel(const Tensor& a, const Tensor& b);

}  // namespace oracle
