#include "quamba/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "quamba/error.hpp"
#include "quamba/kmeans.hpp"
#include "quamba/quantizer.hpp"

namespace quamba {

using nlohmann::json;

void CalibStats::observe(const Tensor& v, bool keep_values) {
  QUAMBA_CHECK(v.rank() == 2, "calibration samples must be rank 2");
  const std::size_t ch = v.dim(1);
  if (channel_max.empty()) channel_max.assign(ch, 0.0f);
  QUAMBA_CHECK(channel_max.size() == ch, "calibration sample width changed between samples");
  for (std::size_t r = 0; r < v.dim(0); ++r) {
    const auto row = v.row(r);
    for (std::size_t c = 0; c < ch; ++c) {
      QUAMBA_CHECK(std::isfinite(row[c]), "non-finite activation during calibration");
      channel_max[c] = std::max(channel_max[c], std::fabs(row[c]));
    }
  }
  if (keep_values) {
    const std::size_t old = values.size();
    for (float x : v.data()) values.push_back(std::fabs(x));
    std::sort(values.begin() + static_cast<std::ptrdiff_t>(old), values.end());
    std::inplace_merge(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(old),
                       values.end());
  }
  ++sample_count;
}

void CalibStats::merge(const CalibStats& other) {
  if (channel_max.empty()) channel_max.assign(other.channel_max.size(), 0.0f);
  QUAMBA_CHECK(other.channel_max.empty() || other.channel_max.size() == channel_max.size(),
               "cannot merge statistics of different widths");
  for (std::size_t c = 0; c < other.channel_max.size(); ++c)
    channel_max[c] = std::max(channel_max[c], other.channel_max[c]);
  std::vector<float> merged;
  merged.reserve(values.size() + other.values.size());
  std::merge(values.begin(), values.end(), other.values.begin(), other.values.end(),
             std::back_inserter(merged));
  values = std::move(merged);
  sample_count += other.sample_count;
}

float CalibStats::max() const {
  float m = 0.0f;
  for (float v : channel_max) m = std::max(m, v);
  return m;
}

std::string stats_key(std::size_t block, Site s) {
  return "blocks." + std::to_string(block) + "." + site_name(s);
}

Calibration collect_stats(const FloatModel& model, const Tensor& calib_tokens,
                          const CollectOptions& opt) {
  QUAMBA_CHECK(calib_tokens.rank() == 2 && calib_tokens.dim(0) >= 1 && calib_tokens.dim(1) >= 1,
               "empty calibration set");
  std::set<Site> wanted(opt.sites.begin(), opt.sites.end());
  Calibration cal;
  std::map<std::string, std::vector<Tensor>> rows;
  const ModelObserver obs = [&](std::size_t block, Site s, const Tensor& v) {
    if (!wanted.empty() && !wanted.count(s)) return;
    const std::string key = stats_key(block, s);
    cal.stats[key].observe(v, opt.keep_values);
    if (opt.keep_inputs && (s == Site::U || s == Site::X || s == Site::DtLow || s == Site::Y))
      rows[key].push_back(v);
  };
  for (std::size_t r = 0; r < calib_tokens.dim(0); ++r) {
    const Tokens tokens = token_row(calib_tokens, r);
    model_forward(model, tokens, opt.forward, &obs);
  }
  for (auto& [key, parts] : rows) cal.inputs[key] = concat_rows(parts);
  return cal;
}

std::size_t ClusterMap::head_group_of(std::size_t h) const {
  for (std::size_t g = 0; g + 1 < head_group_bounds.size(); ++g)
    if (h < head_group_bounds[g + 1]) return g;
  throw Error("head position " + std::to_string(h) + " outside the cluster map");
}

std::vector<std::uint32_t> ClusterMap::cell_index(bool reordered) const {
  std::vector<std::uint32_t> cells(n_heads * head_dim);
  for (std::size_t hn = 0; hn < n_heads; ++hn) {
    const std::size_t g = head_group_of(hn);
    const auto& cb = channel_group_bounds[g];
    std::size_t j = 0;
    for (std::size_t p = 0; p < head_dim; ++p) {
      while (p >= cb[j + 1]) ++j;
      const std::size_t ho = head_perm[hn];
      const std::size_t ch = reordered ? hn * head_dim + p : ho * head_dim + channel_perm[ho][p];
      cells[ch] = static_cast<std::uint32_t>(g * n() + j);
    }
  }
  return cells;
}

namespace {

void check_perm(const std::vector<std::size_t>& p, std::size_t n, const char* what) {
  QUAMBA_CHECK(p.size() == n, std::string(what) + " has the wrong length");
  std::vector<bool> seen(n, false);
  for (auto v : p) {
    QUAMBA_CHECK(v < n && !seen[v], std::string(what) + " is not a permutation");
    seen[v] = true;
  }
}

void check_bounds(const std::vector<std::size_t>& b, std::size_t n, const char* what) {
  QUAMBA_CHECK(b.size() >= 2 && b.front() == 0 && b.back() == n,
               std::string(what) + " must start at 0 and end at " + std::to_string(n));
  for (std::size_t i = 1; i < b.size(); ++i)
    QUAMBA_CHECK(b[i] > b[i - 1], std::string(what) + " must be strictly increasing");
}

std::vector<std::size_t> equal_bounds(std::size_t n, std::size_t k) {
  std::vector<std::size_t> b(k + 1);
  for (std::size_t i = 0; i <= k; ++i) b[i] = i * n / k;
  return b;
}

}  // namespace

void ClusterMap::validate() const {
  QUAMBA_CHECK(n_heads >= 1 && head_dim >= 1, "cluster map has no channels");
  check_perm(head_perm, n_heads, "head_perm");
  QUAMBA_CHECK(channel_perm.size() == n_heads, "channel_perm needs one entry per head");
  for (const auto& p : channel_perm) check_perm(p, head_dim, "channel_perm");
  check_bounds(head_group_bounds, n_heads, "head_group_bounds");
  QUAMBA_CHECK(channel_group_bounds.size() == m(), "channel_group_bounds needs one entry per head group");
  for (const auto& b : channel_group_bounds) {
    check_bounds(b, head_dim, "channel_group_bounds");
    QUAMBA_CHECK(b.size() == channel_group_bounds[0].size(), "every head group needs n channel groups");
  }
  QUAMBA_CHECK(scales.size() == m() * n(), "cluster map needs m × n scales");
  for (float s : scales) QUAMBA_CHECK(s > 0.0f && std::isfinite(s), "cluster scales must be positive");
}

json ClusterMap::to_json() const {
  return {{"n_heads", n_heads},
          {"head_dim", head_dim},
          {"head_perm", head_perm},
          {"channel_perm", channel_perm},
          {"head_group_bounds", head_group_bounds},
          {"channel_group_bounds", channel_group_bounds},
          {"scales", scales},
          {"fallback", fallback}};
}

ClusterMap ClusterMap::from_json(const json& j) {
  ClusterMap c;
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.head_dim = j.at("head_dim").get<std::size_t>();
  c.head_perm = j.at("head_perm").get<std::vector<std::size_t>>();
  c.channel_perm = j.at("channel_perm").get<std::vector<std::vector<std::size_t>>>();
  c.head_group_bounds = j.at("head_group_bounds").get<std::vector<std::size_t>>();
  c.channel_group_bounds = j.at("channel_group_bounds").get<std::vector<std::vector<std::size_t>>>();
  c.scales = j.at("scales").get<std::vector<float>>();
  c.fallback = j.value("fallback", false);
  c.validate();
  return c;
}

ClusterMap ClusterMap::identity(std::size_t n_heads, std::size_t head_dim) {
  ClusterMap c;
  c.n_heads = n_heads;
  c.head_dim = head_dim;
  c.head_perm.resize(n_heads);
  std::iota(c.head_perm.begin(), c.head_perm.end(), 0);
  std::vector<std::size_t> id(head_dim);
  std::iota(id.begin(), id.end(), 0);
  c.channel_perm.assign(n_heads, id);
  c.head_group_bounds = {0, n_heads};
  c.channel_group_bounds = {{0, head_dim}};
  c.scales = {1.0f};
  return c;
}

std::vector<float> cell_scales(const std::vector<float>& channel_max,
                               const std::vector<std::uint32_t>& cells, std::size_t n_cells,
                               int bits) {
  QUAMBA_CHECK(channel_max.size() == cells.size(), "one cell per channel required");
  std::vector<float> mx(n_cells, 0.0f);
  for (std::size_t c = 0; c < cells.size(); ++c) {
    QUAMBA_CHECK(cells[c] < n_cells, "cell index out of range");
    mx[cells[c]] = std::max(mx[cells[c]], channel_max[c]);
  }
  std::vector<float> s(n_cells);
  for (std::size_t i = 0; i < n_cells; ++i) s[i] = scale_from_max(mx[i], bits);
  return s;
}

namespace {

std::size_t count_distinct(std::vector<std::vector<double>> pts) {
  std::sort(pts.begin(), pts.end());
  return static_cast<std::size_t>(std::unique(pts.begin(), pts.end()) - pts.begin());
}

// Splits non-increasing per-position maxima into k contiguous runs.
std::vector<std::size_t> cluster_positions(const std::vector<double>& q, std::size_t k,
                                           const ClusterOptions& opt, bool& fallback) {
  std::vector<std::vector<double>> pts;
  for (double v : q) pts.push_back({v});
  if (k == 1) return {0, q.size()};
  if (count_distinct(pts) < k) {
    fallback = true;
    return equal_bounds(q.size(), k);
  }
  const KMeansResult r = kmeans(pts, k, opt.seed, opt.max_iter);
  std::vector<std::size_t> bounds{0};
  std::set<std::size_t> used{r.labels[0]};
  for (std::size_t p = 1; p < q.size(); ++p) {
    if (r.labels[p] != r.labels[p - 1]) {
      bounds.push_back(p);
      if (!used.insert(r.labels[p]).second) {
        fallback = true;
        return equal_bounds(q.size(), k);
      }
    }
  }
  bounds.push_back(q.size());
  if (bounds.size() != k + 1) {
    fallback = true;
    return equal_bounds(q.size(), k);
  }
  return bounds;
}

}  // namespace

ClusterMap sort_and_cluster(const CalibStats& stats_x, std::size_t n_heads, std::size_t head_dim,
                            const ClusterOptions& opt) {
  QUAMBA_CHECK(n_heads >= 1 && head_dim >= 1, "cluster geometry must be non-empty");
  QUAMBA_CHECK(stats_x.channel_max.size() == n_heads * head_dim,
               "x statistics have " + std::to_string(stats_x.channel_max.size()) +
                   " channels, expected " + std::to_string(n_heads * head_dim));
  QUAMBA_CHECK(opt.m >= 1 && opt.n >= 1, "m and n must be at least 1");
  const std::size_t m = std::min(opt.m, n_heads);
  const std::size_t n = std::min(opt.n, head_dim);

  ClusterMap cm;
  cm.n_heads = n_heads;
  cm.head_dim = head_dim;
  cm.channel_perm.resize(n_heads);
  std::vector<std::vector<double>> sorted(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const float* v = stats_x.channel_max.data() + h * head_dim;
    auto& perm = cm.channel_perm[h];
    perm.resize(head_dim);
    std::iota(perm.begin(), perm.end(), 0);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    for (auto p : perm) sorted[h].push_back(v[p]);
  }

  // Head groups.
  std::vector<std::size_t> label(n_heads, 0);
  if (m > 1) {
    if (count_distinct(sorted) < m) {
      cm.fallback = true;
      std::vector<std::size_t> order(n_heads);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return sorted[a][0] > sorted[b][0]; });
      const auto eb = equal_bounds(n_heads, m);
      for (std::size_t g = 0; g < m; ++g)
        for (std::size_t i = eb[g]; i < eb[g + 1]; ++i) label[order[i]] = g;
    } else {
      label = kmeans(sorted, m, opt.seed, opt.max_iter).labels;
    }
  }
  // Order groups by their largest member maximum, descending; ties by first member.
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t h = 0; h < n_heads; ++h) members[label[h]].push_back(h);
  std::erase_if(members, [](const auto& g) { return g.empty(); });
  if (members.size() < m) {
    cm.fallback = true;
    std::vector<std::size_t> order(n_heads);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sorted[a][0] > sorted[b][0]; });
    const auto eb = equal_bounds(n_heads, m);
    members.assign(m, {});
    for (std::size_t g = 0; g < m; ++g)
      for (std::size_t i = eb[g]; i < eb[g + 1]; ++i) members[g].push_back(order[i]);
    for (auto& g : members) std::sort(g.begin(), g.end());
  }
  auto top = [&](const std::vector<std::size_t>& g) {
    double t = 0.0;
    for (auto h : g) t = std::max(t, sorted[h][0]);
    return t;
  };
  std::stable_sort(members.begin(), members.end(), [&](const auto& a, const auto& b) {
    const double ta = top(a), tb = top(b);
    return ta != tb ? ta > tb : a.front() < b.front();
  });
  cm.head_group_bounds = {0};
  for (const auto& g : members) {
    cm.head_perm.insert(cm.head_perm.end(), g.begin(), g.end());
    cm.head_group_bounds.push_back(cm.head_perm.size());
  }

  // Channel groups per head group, then scales.
  cm.scales.assign(m * n, 1.0f);
  for (std::size_t g = 0; g < m; ++g) {
    std::vector<double> q(head_dim, 0.0);
    for (auto h : members[g])
      for (std::size_t p = 0; p < head_dim; ++p) q[p] = std::max(q[p], sorted[h][p]);
    const auto bounds = cluster_positions(q, n, opt, cm.fallback);
    for (std::size_t j = 0; j < n; ++j) {
      double mx = 0.0;
      for (std::size_t p = bounds[j]; p < bounds[j + 1]; ++p) mx = std::max(mx, q[p]);
      cm.scales[g * n + j] = scale_from_max(static_cast<float>(mx), opt.bits);
    }
    cm.channel_group_bounds.push_back(bounds);
  }
  cm.validate();
  return cm;
}

json StateGroupScales::to_json() const {
  return {{"boundaries", boundaries},
          {"scales_B", scales_b},
          {"scales_C", scales_c},
          {"scales_state", scales_state}};
}

StateGroupScales StateGroupScales::from_json(const json& j) {
  StateGroupScales s;
  s.boundaries = j.at("boundaries").get<std::vector<std::size_t>>();
  s.scales_b = j.at("scales_B").get<std::vector<float>>();
  s.scales_c = j.at("scales_C").get<std::vector<float>>();
  s.scales_state = j.value("scales_state", std::vector<float>{});
  return s;
}

StateGroupScales build_state_group_scales(const CalibStats& stats_b, const CalibStats& stats_c,
                                          std::size_t n_state_groups, std::size_t d_state,
                                          int bits) {
  QUAMBA_CHECK(n_state_groups >= 1 && d_state >= 1, "state groups must be non-empty");
  const std::size_t width = n_state_groups * d_state;
  QUAMBA_CHECK(stats_b.channel_max.size() == width && stats_c.channel_max.size() == width,
               "B/C statistics do not match " + std::to_string(n_state_groups) + " groups of " +
                   std::to_string(d_state));
  StateGroupScales s;
  for (std::size_t g = 0; g <= n_state_groups; ++g) s.boundaries.push_back(g * d_state);
  auto group_scale = [&](const CalibStats& st, std::size_t g) {
    float mx = 0.0f;
    for (std::size_t i = s.boundaries[g]; i < s.boundaries[g + 1]; ++i)
      mx = std::max(mx, st.channel_max[i]);
    return scale_from_max(mx, bits);
  };
  for (std::size_t g = 0; g < n_state_groups; ++g) {
    s.scales_b.push_back(group_scale(stats_b, g));
    s.scales_c.push_back(group_scale(stats_c, g));
  }
  return s;
}

float percentile_value(const std::vector<float>& sorted_values, float p) {
  QUAMBA_CHECK(p > 0.0f && p <= 100.0f, "percentile must be in (0, 100]");
  if (sorted_values.empty()) return 0.0f;
  const double n = static_cast<double>(sorted_values.size());
  // p arrives as a float (99.9f is 99.90000153); drop that representation error
  // before taking the ceiling.
  const double x = static_cast<double>(p) / 100.0 * n;
  auto rank = static_cast<std::size_t>(std::ceil(x - 1e-6 * x));
  rank = std::clamp<std::size_t>(rank, 1, sorted_values.size());
  return sorted_values[rank - 1];
}

float calibrate_site_scale(const CalibStats& stats, int bits, std::optional<float> clip_percentile) {
  check_bits(bits);
  QUAMBA_CHECK(stats.sample_count > 0, "statistics are empty");
  if (clip_percentile) {
    QUAMBA_CHECK(!stats.values.empty(), "percentile clipping needs a value sketch");
    return scale_from_max(percentile_value(stats.values, *clip_percentile), bits);
  }
  return scale_from_max(stats.max(), bits);
}

Archive stats_to_archive(const StatsMap& stats) {
  Archive a;
  json meta = json::object();
  for (const auto& [key, st] : stats) {
    a.add(key + ".channel_max", Tensor({st.channel_max.size()}, st.channel_max));
    meta[key] = {{"sample_count", st.sample_count}};
  }
  a.add_meta("calibration", {{"sites", meta}});
  return a;
}

StatsMap stats_from_archive(const Archive& a) {
  QUAMBA_CHECK(a.contains("calibration"), "not a statistics archive (no calibration entry)");
  StatsMap out;
  for (const auto& [key, info] : a.meta("calibration").at("sites").items()) {
    CalibStats st;
    st.channel_max = a.tensor(key + ".channel_max").vec();
    st.sample_count = info.at("sample_count").get<std::size_t>();
    out[key] = std::move(st);
  }
  return out;
}

}  // namespace quamba
