#include "quamba/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "quamba/error.hpp"

namespace quamba {

namespace {

void same_shape(const Tensor& a, const Tensor& b) {
  QUAMBA_CHECK(a.shape() == b.shape(), "shape mismatch: " + shape_to_string(a.shape()) + " vs " +
                                           shape_to_string(b.shape()));
}

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  same_shape(a, b);
  if (a.numel() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.numel());
}

double sqnr_db(const Tensor& ref, const Tensor& test) {
  same_shape(ref, test);
  double sig = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.numel(); ++i) {
    sig += static_cast<double>(ref[i]) * ref[i];
    const double d = static_cast<double>(ref[i]) - test[i];
    err += d * d;
  }
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(sig / err);
}

double rel_err(const Tensor& a, const Tensor& b) {
  same_shape(a, b);
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    diff = std::max(diff, std::fabs(static_cast<double>(a[i]) - b[i]));
    ref = std::max(ref, std::fabs(static_cast<double>(b[i])));
  }
  if (ref == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / ref;
}

double argmax_agreement(const Tensor& a, const Tensor& b) {
  same_shape(a, b);
  QUAMBA_CHECK(a.rank() == 2, "argmax agreement needs rank-2 logits");
  if (a.dim(0) == 0) return 1.0;
  std::size_t agree = 0;
  for (std::size_t r = 0; r < a.dim(0); ++r) {
    const auto ra = a.row(r), rb = b.row(r);
    agree += std::max_element(ra.begin(), ra.end()) - ra.begin() ==
             std::max_element(rb.begin(), rb.end()) - rb.begin();
  }
  return static_cast<double>(agree) / static_cast<double>(a.dim(0));
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  QUAMBA_CHECK(a.size() == b.size() && a.size() >= 2, "spearman needs two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 1.0;
  return num / std::sqrt(da * db);
}

}  // namespace quamba
