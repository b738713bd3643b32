#include "quamba/precision_search.hpp"

#include <algorithm>
#include <numeric>

#include "quamba/error.hpp"
#include "quamba/rng.hpp"

namespace quamba {

using nlohmann::json;

namespace {

constexpr Profile kA8 = Profile::W4A8;
constexpr Profile kA16 = Profile::W4A16;

std::string blocks_key(const std::vector<Profile>& blocks) {
  std::string k;
  for (auto p : blocks) k += p == kA16 ? 'H' : (p == kA8 ? 'L' : 'E');
  return k;
}

}  // namespace

std::size_t PrecisionPlan::a16_count() const {
  return static_cast<std::size_t>(std::count(blocks.begin(), blocks.end(), kA16));
}

bool PrecisionPlan::feasible() const { return a16_count() <= budget; }

std::string PrecisionPlan::key() const { return blocks_key(blocks); }

json PrecisionPlan::to_json() const {
  json b = json::array();
  for (auto p : blocks) b.push_back(profile_name(p));
  return {{"blocks", b},
          {"embedding_bits", embedding_bits},
          {"head_bits", head_bits},
          {"budget", budget},
          {"a8_a16", std::to_string(blocks.size() - a16_count()) + ":" +
                         std::to_string(a16_count())}};
}

PrecisionPlan PrecisionPlan::from_json(const json& j) {
  PrecisionPlan p;
  for (const auto& b : j.at("blocks")) p.blocks.push_back(profile_from_name(b.get<std::string>()));
  p.embedding_bits = j.value("embedding_bits", 16);
  p.head_bits = j.value("head_bits", 16);
  p.budget = j.value("budget", p.a16_count());
  QUAMBA_CHECK(p.feasible(), "plan uses " + std::to_string(p.a16_count()) +
                                 " A16 blocks, budget is " + std::to_string(p.budget));
  return p;
}

void SearchConfig::validate() const {
  QUAMBA_CHECK(population >= 2, "population must be at least 2");
  QUAMBA_CHECK(generations >= 1, "generations must be at least 1");
}

json SearchConfig::to_json() const {
  return {{"population", population},
          {"generations", generations},
          {"n_mutations", n_mutations},
          {"n_crossovers", n_crossovers},
          {"seed", seed}};
}

SearchConfig SearchConfig::from_json(const json& j) {
  SearchConfig c;
  c.population = j.value("population", c.population);
  c.generations = j.value("generations", c.generations);
  c.n_mutations = j.value("n_mutations", c.n_mutations);
  c.n_crossovers = j.value("n_crossovers", c.n_crossovers);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

FitnessEvaluator::FitnessEvaluator(const FloatModel& reference, const QuantizedModel& quantized,
                                   const Tensor& eval_tokens)
    : quantized_(quantized) {
  QUAMBA_CHECK(eval_tokens.rank() == 2 && eval_tokens.dim(0) >= 1, "empty evaluation token set");
  QUAMBA_CHECK(reference.config.n_blocks == quantized.config.n_blocks &&
                   reference.config.dims == quantized.config.dims,
               "float and quantized models differ in geometry");
  for (const auto& b : quantized.blocks) {
    QUAMBA_CHECK(b.in_proj.bits() == 4, "precision search needs 4-bit block weights");
    QUAMBA_CHECK(b.act.has_value(), "missing calibration: precision search needs A8 scales");
  }
  for (std::size_t r = 0; r < eval_tokens.dim(0); ++r) {
    rows_.push_back(token_row(eval_tokens, r));
    reference_logits_.push_back(model_forward(reference, rows_.back()));
  }
}

double FitnessEvaluator::operator()(const std::vector<Profile>& blocks) {
  const std::string key = blocks_key(blocks);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  QuantModelOptions opt;
  opt.profiles = blocks;
  double err = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows_.size(); ++r) {
    const Tensor logits = quantized_model_forward(quantized_, rows_[r], opt);
    for (std::size_t i = 0; i < logits.numel(); ++i) {
      const double d = static_cast<double>(logits[i]) - reference_logits_[r][i];
      err += d * d;
    }
    count += logits.numel();
  }
  ++evaluations_;
  const double f = -err / static_cast<double>(count);
  cache_.emplace(key, f);
  return f;
}

double fitness(const PrecisionPlan& plan, const FloatModel& reference,
               const QuantizedModel& quantized, const Tensor& eval_tokens) {
  FitnessEvaluator eval(reference, quantized, eval_tokens);
  return eval(plan);
}

json SearchTrace::to_json() const {
  json gens = json::array();
  for (const auto& g : generations)
    gens.push_back({{"generation", g.index},
                    {"best_fitness", g.best},
                    {"mean_fitness", g.mean},
                    {"best_plan", g.best_plan.to_json()}});
  return {{"metric", "negative logits MSE vs float model"},
          {"generations", gens},
          {"sensitivity", sensitivity},
          {"evaluations", evaluations}};
}

void repair_plan(PrecisionPlan& plan, const std::vector<double>& sensitivity) {
  QUAMBA_CHECK(sensitivity.size() == plan.blocks.size(), "one sensitivity per block required");
  while (!plan.feasible()) {
    std::size_t victim = plan.blocks.size();
    for (std::size_t i = 0; i < plan.blocks.size(); ++i)
      if (plan.blocks[i] == kA16 &&
          (victim == plan.blocks.size() || sensitivity[i] < sensitivity[victim]))
        victim = i;
    plan.blocks[victim] = kA8;
  }
}

namespace {

struct Scored {
  PrecisionPlan plan;
  double fitness;
};

void rank(std::vector<Scored>& pop) {
  std::stable_sort(pop.begin(), pop.end(), [](const Scored& a, const Scored& b) {
    return a.fitness != b.fitness ? a.fitness > b.fitness : a.plan.key() < b.plan.key();
  });
}

std::vector<double> block_sensitivity(FitnessEvaluator& eval) {
  std::vector<double> s(eval.n_blocks());
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::vector<Profile> blocks(s.size(), kA16);
    blocks[i] = kA8;
    s[i] = -eval(blocks);
  }
  return s;
}

PrecisionPlan base_plan(const FitnessEvaluator& eval, std::size_t budget) {
  PrecisionPlan p;
  p.blocks.assign(eval.n_blocks(), kA8);
  p.embedding_bits = eval.quantized().embedding_bits();
  p.head_bits = eval.quantized().head_bits();
  p.budget = budget;
  return p;
}

void record(SearchTrace& trace, std::size_t index, const std::vector<Scored>& pop) {
  SearchTrace::Generation g;
  g.index = index;
  g.best = pop.front().fitness;
  double sum = 0.0;
  for (const auto& s : pop) sum += s.fitness;
  g.mean = sum / static_cast<double>(pop.size());
  g.best_plan = pop.front().plan;
  trace.generations.push_back(std::move(g));
}

}  // namespace

SearchResult evolve(FitnessEvaluator& eval, std::size_t budget, const SearchConfig& cfg,
                    const std::vector<PrecisionPlan>& initial) {
  cfg.validate();
  const std::size_t nb = eval.n_blocks();
  QUAMBA_CHECK(budget <= nb, "infeasible budget: " + std::to_string(budget) + " A16 blocks of " +
                                 std::to_string(nb));
  SearchResult res;
  res.trace.sensitivity = block_sensitivity(eval);
  const auto& sens = res.trace.sensitivity;
  const PrecisionPlan base = base_plan(eval, budget);

  std::vector<Scored> pop;
  for (std::size_t i = 0; i < cfg.population; ++i) {
    PrecisionPlan p = base;
    if (i < initial.size()) {
      QUAMBA_CHECK(initial[i].blocks.size() == nb, "seed plan has the wrong block count");
      p.blocks = initial[i].blocks;
    } else {
      Rng rng = Rng::derive(cfg.seed, 0, i);
      for (auto& b : p.blocks) b = rng.below(2) ? kA16 : kA8;
    }
    repair_plan(p, sens);
    const double f = eval(p);
    pop.push_back({std::move(p), f});
  }
  rank(pop);
  record(res.trace, 0, pop);

  for (std::size_t g = 1; g <= cfg.generations; ++g) {
    pop.resize(std::max<std::size_t>(1, pop.size() / 2));
    const std::size_t parents = pop.size();
    std::vector<Scored> children;
    for (std::size_t j = 0; j < cfg.n_mutations; ++j) {
      Rng rng = Rng::derive(cfg.seed, g, j);
      PrecisionPlan p = pop[rng.below(parents)].plan;
      auto& b = p.blocks[rng.below(nb)];
      b = b == kA16 ? kA8 : kA16;
      repair_plan(p, sens);
      const double f = eval(p);
      children.push_back({std::move(p), f});
    }
    for (std::size_t j = 0; j < cfg.n_crossovers; ++j) {
      Rng rng = Rng::derive(cfg.seed, g, cfg.n_mutations + j);
      const PrecisionPlan& a = pop[rng.below(parents)].plan;
      const PrecisionPlan& b = pop[rng.below(parents)].plan;
      PrecisionPlan p = base;
      for (std::size_t k = 0; k < nb; ++k) p.blocks[k] = rng.below(2) ? a.blocks[k] : b.blocks[k];
      repair_plan(p, sens);
      const double f = eval(p);
      children.push_back({std::move(p), f});
    }
    pop.insert(pop.end(), children.begin(), children.end());
    rank(pop);
    record(res.trace, g, pop);
  }
  res.plan = pop.front().plan;
  res.fitness = pop.front().fitness;
  res.trace.evaluations = eval.evaluations();
  return res;
}

SearchResult exhaustive_search(FitnessEvaluator& eval, std::size_t budget) {
  const std::size_t nb = eval.n_blocks();
  QUAMBA_CHECK(nb < 24, "exhaustive search is limited to fewer than 24 blocks");
  QUAMBA_CHECK(budget <= nb, "infeasible budget");
  std::vector<Scored> all;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nb); ++mask) {
    PrecisionPlan p = base_plan(eval, budget);
    for (std::size_t k = 0; k < nb; ++k) p.blocks[k] = (mask >> k) & 1 ? kA16 : kA8;
    if (!p.feasible()) continue;
    const double f = eval(p);
    all.push_back({std::move(p), f});
  }
  rank(all);
  SearchResult res;
  res.plan = all.front().plan;
  res.fitness = all.front().fitness;
  record(res.trace, 0, all);
  res.trace.evaluations = eval.evaluations();
  return res;
}

PrecisionPlan handcrafted_plan(HandcraftedKind kind, std::size_t k, std::size_t n_blocks) {
  QUAMBA_CHECK(k <= n_blocks, "k exceeds the number of blocks");
  PrecisionPlan p;
  p.blocks.assign(n_blocks, kA8);
  p.budget = k;
  for (std::size_t i = 0; i < k; ++i)
    p.blocks[kind == HandcraftedKind::FirstK ? i : n_blocks - 1 - i] = kA16;
  return p;
}

}  // namespace quamba
