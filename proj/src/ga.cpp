#include "aliasforge/ga.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "aliasforge/parallel.hpp"

namespace aliasforge {

void GAConfig::check() const {
  if (population_size < 4 || population_size % 2 != 0)
    throw std::invalid_argument("population_size must be even and >= 4");
  if (generations < 1) throw std::invalid_argument("generations must be >= 1");
  if (budget < 0.0) throw std::invalid_argument("budget must be >= 0");
  if (mutation_sigma < 0.0) throw std::invalid_argument("mutation_sigma must be >= 0");
}

bool ranks_before(const Candidate& a, std::size_t ia, const Candidate& b, std::size_t ib) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.report.fitness != b.report.fitness) return a.report.fitness < b.report.fitness;
  if (a.report.latency != b.report.latency) return a.report.latency < b.report.latency;
  return ia < ib;
}

Candidate evaluate_candidate(const ModelGraph& base, const Genome& genome, double baseline_latency,
                             const GAConfig& cfg) {
  const ModelGraph obfuscated = apply_genome(base, genome);
  const TraceMatrix tm = trace(obfuscated, cfg.trace);
  Candidate c;
  c.genome = genome;
  c.report = fitness(tm, baseline_latency, cfg.budget, cfg.fitness_mode, cfg.trace);
  c.feasible = c.report.latency <= (1.0 + cfg.budget) * baseline_latency;
  return c;
}

std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, std::size_t point) {
  if (!a.compatible_with(b)) throw std::invalid_argument("crossover: incompatible genomes");
  if (point < 1 || point >= a.slots.size())
    throw std::invalid_argument("crossover: point " + std::to_string(point) + " outside [1, " +
                                std::to_string(a.slots.size()) + ")");
  Genome x = a;
  Genome y = b;
  for (std::size_t i = point; i < a.slots.size(); ++i) {
    x.slots[i] = b.slots[i];
    y.slots[i] = a.slots[i];
  }
  return {x, y};
}

Genome mutate(const Genome& genome, double sigma, Rng& rng) {
  Genome out = genome;
  if (sigma == 0.0) return out;
  auto step = [&](double scale) {
    return static_cast<int>(std::lround(rng.normal(0.0, sigma) * scale));
  };
  for (auto& slot : out.slots) {
    for (KnobOp op : kKnobOps) {
      if (!slot.can(op)) continue;
      const double activation = (slot.uses(op) ? 1.0 : 0.0) + rng.normal(0.0, sigma);
      slot.set(op, activation > 0.5);
    }
    if (slot.can(KnobOp::BranchIn))
      slot.in_split = std::clamp(slot.in_split + step(std::max(1.0, slot.in_channels / 8.0)), 1,
                                 slot.in_channels - 1);
    if (slot.can(KnobOp::BranchOut))
      slot.out_split = std::clamp(slot.out_split + step(std::max(1.0, slot.out_channels / 8.0)), 1,
                                  slot.out_channels - 1);
    if (slot.can(KnobOp::Deepen)) {
      const auto it = std::find(kDeepenKernels.begin(), kDeepenKernels.end(), slot.deepen_kernel);
      const int idx = it == kDeepenKernels.end() ? 1 : static_cast<int>(it - kDeepenKernels.begin());
      slot.deepen_kernel =
          kDeepenKernels[static_cast<std::size_t>(std::clamp(idx + step(1.0), 0, 2))];
    }
  }
  return out;
}

EvolveResult evolve(const ModelGraph& base_in, const GAConfig& cfg,
                    const std::optional<std::vector<Genome>>& initial, std::ostream* progress) {
  cfg.check();
  const ModelGraph base = infer_shapes(strip_weights(base_in));
  const Genome blank = empty_genome(base);
  if (std::none_of(blank.slots.begin(), blank.slots.end(),
                   [](const KnobSlot& s) { return s.applicable_count() > 0; }))
    throw TransformError("evolve: model " + base.name + " has no layer eligible for obfuscation");

  EvolveResult result;
  const TraceMatrix base_trace = trace(base, cfg.trace);
  result.baseline_latency = total_latency(base_trace, cfg.trace);
  result.baseline_stdev_sum = fitness(base_trace, result.baseline_latency, cfg.budget,
                                      cfg.fitness_mode, cfg.trace).stdev_sum;

  const auto pop_size = static_cast<std::size_t>(cfg.population_size);
  std::vector<Genome> genomes;
  if (initial) {
    if (initial->size() != pop_size)
      throw std::invalid_argument("evolve: initial population size mismatch");
    for (const auto& g : *initial)
      if (!g.compatible_with(blank)) throw std::invalid_argument("evolve: incompatible initial genome");
    genomes = *initial;
  } else {
    for (std::size_t i = 0; i < pop_size; ++i)
      genomes.push_back(random_genome(base, derive_seed(cfg.seed, "ga-init", i)));
  }

  std::vector<std::optional<Candidate>> population(pop_size);

  std::optional<Candidate> best;
  std::size_t best_index = 0;
  double best_feasible_fitness = std::numeric_limits<double>::infinity();

  for (int gen = 0; gen < cfg.generations; ++gen) {
    parallel_for(pop_size, [&](std::size_t i) {
      if (!population[i])
        population[i] = evaluate_candidate(base, genomes[i], result.baseline_latency, cfg);
    });

    for (std::size_t i = 0; i < pop_size; ++i) {
      const auto& c = *population[i];
      result.log.push_back({gen, static_cast<int>(i), c.report, c.feasible});
      if (c.feasible) best_feasible_fitness = std::min(best_feasible_fitness, c.report.fitness);
      const std::size_t global_index = static_cast<std::size_t>(gen) * pop_size + i;
      if (!best || ranks_before(c, global_index, *best, best_index)) {
        best = c;
        best_index = global_index;
      }
    }
    result.best_fitness_history.push_back(best_feasible_fitness);
    if (progress)
      *progress << "generation " << gen + 1 << "/" << cfg.generations
                << " best_fitness=" << best->report.fitness
                << " stdev_sum=" << best->report.stdev_sum
                << " latency_ratio=" << best->report.latency / result.baseline_latency
                << (best->feasible ? "" : " (infeasible)") << '\n';
    if (gen + 1 == cfg.generations) break;

    std::vector<std::size_t> order(pop_size);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return ranks_before(*population[a], a, *population[b], b);
    });

    const std::size_t parents = pop_size / 2;
    std::vector<std::optional<Candidate>> next(pop_size);
    std::vector<Genome> next_genomes(pop_size);
    for (std::size_t r = 0; r < parents; ++r) {
      next[r] = population[order[r]];
      next_genomes[r] = genomes[order[r]];
    }
    const std::size_t slot_count = blank.slots.size();
    for (std::size_t pair = 0; pair < parents / 2 + parents % 2; ++pair) {
      const std::size_t ia = 2 * pair;
      const std::size_t ib = std::min(ia + 1, parents - 1);
      const auto stream = static_cast<std::uint64_t>(gen) * pop_size + pair;
      Rng rng(derive_seed(cfg.seed, "ga-offspring", stream));
      auto [x, y] = slot_count >= 2
                        ? crossover(next_genomes[ia], next_genomes[ib],
                                    static_cast<std::size_t>(rng.uniform_int(
                                        1, static_cast<std::int64_t>(slot_count) - 1)))
                        : std::pair{next_genomes[ia], next_genomes[ib]};
      const std::size_t out_a = parents + ia;
      const std::size_t out_b = parents + ia + 1;
      if (out_a < pop_size) next_genomes[out_a] = mutate(x, cfg.mutation_sigma, rng);
      if (out_b < pop_size) next_genomes[out_b] = mutate(y, cfg.mutation_sigma, rng);
    }
    population = std::move(next);
    genomes = std::move(next_genomes);
  }

  result.best = *best;
  result.found_feasible = best->feasible;
  if (!result.found_feasible && progress)
    *progress << "warning: no candidate satisfied the latency budget; returning the best overall\n";
  return result;
}

std::string log_csv(const std::vector<GALogRow>& log) {
  auto num = [](double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  std::string out = "generation,candidate,stdev_sum,latency,scaling,fitness,feasible\n";
  for (const auto& r : log)
    out += std::to_string(r.generation) + ',' + std::to_string(r.candidate) + ',' +
           num(r.report.stdev_sum) + ',' + num(r.report.latency) + ',' + num(r.report.scaling) +
           ',' + num(r.report.fitness) + ',' + (r.feasible ? "1" : "0") + '\n';
  return out;
}

}  // namespace aliasforge
