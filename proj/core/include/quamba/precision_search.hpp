#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "quamba/model.hpp"

namespace quamba {

// Per-block profile assignment. Search plans use W4A8 and W4A16 only.
struct PrecisionPlan {
  std::vector<Profile> blocks;
  int embedding_bits = 16;
  int head_bits = 16;
  std::size_t budget = 0;  // A16 blocks allowed

  std::size_t a16_count() const;
  bool feasible() const;
  std::string key() const;
  nlohmann::json to_json() const;
  static PrecisionPlan from_json(const nlohmann::json& j);
  bool operator==(const PrecisionPlan&) const = default;
};

struct SearchConfig {
  std::size_t population = 40;
  std::size_t generations = 5;
  std::size_t n_mutations = 10;
  std::size_t n_crossovers = 10;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static SearchConfig from_json(const nlohmann::json& j);
};

// Negative logits MSE of the quantized model under a plan against the float
// model on a fixed token batch. Results are cached per block assignment.
class FitnessEvaluator {
 public:
  FitnessEvaluator(const FloatModel& reference, const QuantizedModel& quantized,
                   const Tensor& eval_tokens);

  double operator()(const std::vector<Profile>& blocks);
  double operator()(const PrecisionPlan& plan) { return (*this)(plan.blocks); }
  std::size_t n_blocks() const { return quantized_.blocks.size(); }
  std::size_t evaluations() const { return evaluations_; }
  const QuantizedModel& quantized() const { return quantized_; }

 private:
  const QuantizedModel& quantized_;
  std::vector<Tokens> rows_;
  std::vector<Tensor> reference_logits_;
  std::map<std::string, double> cache_;
  std::size_t evaluations_ = 0;
};

double fitness(const PrecisionPlan& plan, const FloatModel& reference,
               const QuantizedModel& quantized, const Tensor& eval_tokens);

struct SearchTrace {
  struct Generation {
    std::size_t index = 0;
    double best = 0.0;
    double mean = 0.0;
    PrecisionPlan best_plan;
  };
  std::vector<Generation> generations;
  std::vector<double> sensitivity;  // solo-A8 MSE per block
  std::size_t evaluations = 0;

  nlohmann::json to_json() const;
};

struct SearchResult {
  PrecisionPlan plan;
  double fitness = 0.0;
  SearchTrace trace;
};

// Demotes A16 blocks with the lowest sensitivity (ties: lower index first)
// until the plan fits its budget.
void repair_plan(PrecisionPlan& plan, const std::vector<double>& sensitivity);

// Population-based search: keep the top half each generation, then add
// n_mutations single-block flips and n_crossovers uniform crossovers, each
// repaired to the budget. Candidate i of generation g draws from
// Rng::derive(seed, g, i). `initial` plans seed the first population.
SearchResult evolve(FitnessEvaluator& eval, std::size_t budget, const SearchConfig& cfg = {},
                    const std::vector<PrecisionPlan>& initial = {});

// Every plan with at most `budget` A16 blocks.
SearchResult exhaustive_search(FitnessEvaluator& eval, std::size_t budget);

enum class HandcraftedKind { FirstK, LastK };
PrecisionPlan handcrafted_plan(HandcraftedKind kind, std::size_t k, std::size_t n_blocks);

}  // namespace quamba
