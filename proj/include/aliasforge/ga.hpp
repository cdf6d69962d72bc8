#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aliasforge/graph.hpp"
#include "aliasforge/metrics.hpp"
#include "aliasforge/rng.hpp"
#include "aliasforge/trace.hpp"
#include "aliasforge/transforms.hpp"

namespace aliasforge {

struct GAConfig {
  int population_size = 16;
  int generations = 20;
  double budget = 0.2;
  double mutation_sigma = 0.5;
  std::uint64_t seed = 0;
  FitnessMode fitness_mode = FitnessMode::Verbatim;
  TraceParams trace;
  // Elitism fraction is fixed at 1/2: the top half survives as parents.

  /// Throws std::invalid_argument unless population is even and >= 4,
  /// generations >= 1, budget >= 0 and sigma >= 0.
  void check() const;
};

struct Candidate {
  Genome genome;
  FitnessReport report;
  bool feasible = false;
};

struct GALogRow {
  int generation = 0;
  int candidate = 0;
  FitnessReport report;
  bool feasible = false;
};

struct EvolveResult {
  Candidate best;
  bool found_feasible = false;
  double baseline_latency = 0.0;
  double baseline_stdev_sum = 0.0;
  std::vector<GALogRow> log;
  /// Best feasible fitness seen up to and including each generation
  /// (+inf while none is feasible).
  std::vector<double> best_fitness_history;
};

/// Ranking order: feasible before infeasible, then fitness, then latency,
/// then population index.
bool ranks_before(const Candidate& a, std::size_t ia, const Candidate& b, std::size_t ib);

Candidate evaluate_candidate(const ModelGraph& base, const Genome& genome, double baseline_latency,
                             const GAConfig& cfg);

/// One-point crossover: (a[0:point) + b[point:), b[0:point) + a[point:)).
std::pair<Genome, Genome> crossover(const Genome& a, const Genome& b, std::size_t point);

/// Gaussian mutation. Each applicable knob bit becomes an activation in
/// {0, 1}, receives N(0, sigma) noise and is re-thresholded at 0.5; split
/// points and deepen kernels move by rounded Gaussian steps and are clamped.
Genome mutate(const Genome& genome, double sigma, Rng& rng);

/// Runs the search. `initial` replaces the random starting population when
/// given (its size must equal population_size). Progress lines go to
/// `progress` when non-null. Throws TransformError when `base` has no knob
/// to turn.
EvolveResult evolve(const ModelGraph& base, const GAConfig& cfg,
                    const std::optional<std::vector<Genome>>& initial = std::nullopt,
                    std::ostream* progress = nullptr);

/// Run log CSV: generation,candidate,stdev_sum,latency,scaling,fitness,feasible.
std::string log_csv(const std::vector<GALogRow>& log);

}  // namespace aliasforge
