#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "quamba/archive.hpp"
#include "quamba/model.hpp"

namespace quamba {

// Running per-channel statistics of one activation site.
struct CalibStats {
  std::vector<float> channel_max;  // max |·| per channel
  std::size_t sample_count = 0;
  // Sorted |·| of every observed element; kept only when percentile clipping
  // needs it.
  std::vector<float> values;

  // Folds in one sample v [T × channels].
  void observe(const Tensor& v, bool keep_values = false);
  // Elementwise max of channel maxima; order-independent.
  void merge(const CalibStats& other);
  float max() const;
  bool operator==(const CalibStats&) const = default;
};

// Keys are "blocks.<i>.<site>".
using StatsMap = std::map<std::string, CalibStats>;

std::string stats_key(std::size_t block, Site s);

struct CollectOptions {
  std::vector<Site> sites;  // empty: every site
  bool keep_values = false;
  // Also gather raw layer inputs (rows of u, x, dt_low and the out_proj input)
  // for GPTQ, keyed like the stats.
  bool keep_inputs = false;
  ForwardOptions forward;
};

struct Calibration {
  StatsMap stats;
  std::map<std::string, Tensor> inputs;
};

// One sample per row of calib_tokens [batch × T].
Calibration collect_stats(const FloatModel& model, const Tensor& calib_tokens,
                          const CollectOptions& opt = {});

// Sort-and-cluster result for one block's x.
struct ClusterMap {
  std::size_t n_heads = 0;
  std::size_t head_dim = 0;
  std::vector<std::size_t> head_perm;                  // new head position → old head
  std::vector<std::vector<std::size_t>> channel_perm;  // [old head][new position] → old channel
  std::vector<std::size_t> head_group_bounds;          // m + 1 bounds over new head positions
  std::vector<std::vector<std::size_t>> channel_group_bounds;  // per head group, n + 1 bounds
  std::vector<float> scales;                                   // m × n, row-major
  bool fallback = false;  // equal-size groups were used somewhere

  std::size_t m() const { return head_group_bounds.size() - 1; }
  std::size_t n() const { return channel_group_bounds.empty() ? 0 : channel_group_bounds[0].size() - 1; }
  // Head group of new head position h.
  std::size_t head_group_of(std::size_t h) const;
  // Scale cell of every channel. reordered: channel index is h'·head_dim + p'
  // in the sorted order; otherwise the original channel index.
  std::vector<std::uint32_t> cell_index(bool reordered) const;

  void validate() const;
  nlohmann::json to_json() const;
  static ClusterMap from_json(const nlohmann::json& j);
  static ClusterMap identity(std::size_t n_heads, std::size_t head_dim);
};

struct ClusterOptions {
  std::size_t m = 4;
  std::size_t n = 4;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  int bits = 8;
};

// (1) stable descending sort of each head's channel maxima; (2) k-means++ over
// the heads' sorted-max vectors (k = m), groups laid out contiguously;
// (3) per head group, k-means over the per-position maxima (k = n), which are
// non-increasing so clusters are contiguous runs; (4) one scale per cell.
// m and n are capped at n_heads and head_dim.
ClusterMap sort_and_cluster(const CalibStats& stats_x, std::size_t n_heads, std::size_t head_dim,
                            const ClusterOptions& opt = {});

// Per-cell scales from per-channel maxima under a cell index.
std::vector<float> cell_scales(const std::vector<float>& channel_max,
                               const std::vector<std::uint32_t>& cells, std::size_t n_cells,
                               int bits = 8);

struct StateGroupScales {
  std::vector<std::size_t> boundaries;  // over the B/C state axis
  std::vector<float> scales_b;
  std::vector<float> scales_c;
  std::vector<float> scales_state;  // m × n, from the ClusterMap cells; may be empty

  nlohmann::json to_json() const;
  static StateGroupScales from_json(const nlohmann::json& j);
};

StateGroupScales build_state_group_scales(const CalibStats& stats_b, const CalibStats& stats_c,
                                          std::size_t n_state_groups, std::size_t d_state,
                                          int bits = 8);

// Nearest-rank percentile of the sorted value sketch: the ⌈p/100·N⌉-th smallest.
float percentile_value(const std::vector<float>& sorted_values, float p);

// Symmetric scale from the max, or from the clip percentile of the value sketch.
float calibrate_site_scale(const CalibStats& stats, int bits,
                           std::optional<float> clip_percentile = std::nullopt);

// Stats archive: "<key>.channel_max" (f32) plus "calibration" metadata.
Archive stats_to_archive(const StatsMap& stats);
StatsMap stats_from_archive(const Archive& a);

}  // namespace quamba
