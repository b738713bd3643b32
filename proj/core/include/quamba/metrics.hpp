#pragma once

#include <vector>

#include "quamba/tensor.hpp"

namespace quamba {

double mse(const Tensor& a, const Tensor& b);
// 10·log10(Σ ref² / Σ (ref − test)²); +inf when the two agree exactly.
double sqnr_db(const Tensor& ref, const Tensor& test);
// max |a − b| / max |ref|, with ref = b; 0 when both are all-zero.
double rel_err(const Tensor& a, const Tensor& b);
// Fraction of rows whose argmax agrees (first index wins ties).
double argmax_agreement(const Tensor& a, const Tensor& b);
// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace quamba
