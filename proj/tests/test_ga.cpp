#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "aliasforge/ga.hpp"
#include "aliasforge/tensor.hpp"
#include "support.hpp"

using namespace aliasforge;

namespace {

GAConfig quick(std::uint64_t seed = 0) {
  GAConfig cfg;
  cfg.seed = seed;
  cfg.population_size = 8;
  cfg.generations = 5;
  return cfg;
}

}  // namespace

TEST_CASE("config checks") {
  GAConfig cfg;
  CHECK_NOTHROW(cfg.check());
  cfg.population_size = 5;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg.population_size = 2;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = GAConfig{};
  cfg.generations = 0;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = GAConfig{};
  cfg.budget = -0.1;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = GAConfig{};
  cfg.mutation_sigma = -1;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
}

TEST_CASE("a model without eligible layers is rejected") {
  GraphBuilder b("adds-only");
  auto x = b.input(2, 4, 4);
  const ModelGraph g = infer_shapes(b.finish(b.add({x, x})));
  CHECK_THROWS_AS(evolve(g, quick()), TransformError);
}

TEST_CASE("one generation without variation returns the initial genome") {
  const ModelGraph base = testsupport::fixture();
  GAConfig cfg = quick();
  cfg.generations = 1;
  cfg.mutation_sigma = 0.0;
  const Genome g = random_genome(base, 9);
  const EvolveResult r = evolve(base, cfg, std::vector<Genome>(8, g));
  CHECK(r.best.genome == g);
  CHECK(r.log.size() == 8);

  CHECK_THROWS_AS(evolve(base, cfg, std::vector<Genome>(6, g)), std::invalid_argument);
  std::vector<Genome> foreign(8, random_genome(testsupport::small_cnn(false), 1));
  CHECK_THROWS_AS(evolve(base, cfg, foreign), std::invalid_argument);
}

TEST_CASE("crossover provenance") {
  const ModelGraph base = testsupport::small_cnn(false);
  Genome a = empty_genome(base);
  REQUIRE(a.slots.size() == 5);
  Genome b = a;
  for (auto& s : b.slots) s.set(KnobOp::Skip, true);
  const auto [x, y] = crossover(a, b, 2);
  const bool xs[] = {false, false, true, true, true};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(x.slots[i].uses(KnobOp::Skip) == xs[i]);
    CHECK(y.slots[i].uses(KnobOp::Skip) == !xs[i]);
  }
  for (std::size_t p : {std::size_t{1}, std::size_t{4}}) {
    const auto [u, v] = crossover(a, b, p);
    CHECK(u.slots.front() == a.slots.front());
    CHECK(u.slots.back() == b.slots.back());
    CHECK(v.slots.front() == b.slots.front());
  }
  const auto [aa, bb] = crossover(a, a, 3);
  CHECK(aa == a);
  CHECK(bb == a);
  CHECK_THROWS_AS(crossover(a, b, 0), std::invalid_argument);
  CHECK_THROWS_AS(crossover(a, b, 5), std::invalid_argument);
  CHECK_THROWS_AS(crossover(a, empty_genome(testsupport::fixture()), 2), std::invalid_argument);
}

TEST_CASE("mutation flips an absent bit with probability P(N(0, 0.5) > 0.5)") {
  const ModelGraph base = testsupport::fixture();
  const Genome blank = empty_genome(base);
  Rng rng(123);
  long draws = 0, flips = 0;
  while (draws < 100000) {
    const Genome m = mutate(blank, 0.5, rng);
    for (const auto& s : m.slots)
      for (KnobOp op : kKnobOps)
        if (s.can(op)) ++draws, flips += s.uses(op);
  }
  const double expected = 0.5 * std::erfc(1.0 / std::sqrt(2.0));  // upper tail at one sigma
  CHECK(expected == doctest::Approx(0.1587).epsilon(1e-3));
  CHECK(std::abs(static_cast<double>(flips) / static_cast<double>(draws) - expected) < 0.005);

  Rng r0(1);
  const Genome g = random_genome(base, 2);
  CHECK(mutate(g, 0.0, r0) == g);
}

TEST_CASE("mutated genomes stay valid") {
  const ModelGraph base = testsupport::small_cnn(true);
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    Genome g = random_genome(base, static_cast<std::uint64_t>(t));
    for (int k = 0; k < 3; ++k) g = mutate(g, 2.0, rng);
    for (const auto& s : g.slots) {
      if (s.can(KnobOp::BranchIn)) CHECK((s.in_split >= 1 && s.in_split < s.in_channels));
      if (s.can(KnobOp::BranchOut)) CHECK((s.out_split >= 1 && s.out_split < s.out_channels));
      for (KnobOp op : kKnobOps)
        if (!s.can(op)) CHECK_FALSE(s.uses(op));
    }
    ModelGraph out;
    CHECK_NOTHROW(out = apply_genome(base, g));
    CHECK(validate(out).ok());
  }
}

TEST_CASE("ranking order") {
  Candidate a, b;
  a.feasible = true;
  a.report.fitness = 5;
  b.report.fitness = 1;
  CHECK(ranks_before(a, 1, b, 0));
  b.feasible = true;
  CHECK(ranks_before(b, 1, a, 0));
  a.report.fitness = 1;
  a.report.latency = 2;
  b.report.latency = 3;
  CHECK(ranks_before(a, 1, b, 0));
  b.report.latency = 2;
  CHECK(ranks_before(b, 0, a, 1));
  CHECK_FALSE(ranks_before(a, 1, b, 0));
}

TEST_CASE("fixture run: monotone, deterministic, consistent log") {
  const ModelGraph base = testsupport::fixture();
  GAConfig cfg;  // defaults, seed 0
  std::ostringstream progress;
  const EvolveResult r = evolve(base, cfg, std::nullopt, &progress);
  CHECK(r.log.size() == 16u * 20u);
  REQUIRE(r.best_fitness_history.size() == 20);
  for (std::size_t g = 1; g < 20; ++g)
    CHECK(r.best_fitness_history[g] <= r.best_fitness_history[g - 1]);

  // Best-ranked candidate per generation never gets worse (elitism).
  std::optional<Candidate> prev;
  for (int gen = 0; gen < 20; ++gen) {
    std::optional<Candidate> top;
    for (const auto& row : r.log)
      if (row.generation == gen) {
        Candidate c;
        c.report = row.report;
        c.feasible = row.feasible;
        if (!top || ranks_before(c, 0, *top, 1)) top = c;
      }
    if (prev) CHECK_FALSE(ranks_before(*prev, 1, *top, 0));
    prev = top;
  }
  CHECK(std::count(progress.str().begin(), progress.str().end(), '\n') >= 20);

  const EvolveResult again = evolve(base, cfg);
  CHECK(again.best.genome == r.best.genome);
  CHECK(log_csv(again.log) == log_csv(r.log));

  const Candidate re = evaluate_candidate(infer_shapes(strip_weights(base)), r.best.genome,
                                          r.baseline_latency, cfg);
  CHECK(re.report.fitness == r.best.report.fitness);
  CHECK(r.baseline_stdev_sum > 0.0);

  const std::string csv = log_csv(r.log);
  CHECK(csv.rfind("generation,candidate,stdev_sum,latency,scaling,fitness,feasible\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 321);
}

TEST_CASE("feasible results meet the budget and preserve function") {
  const ModelGraph base = testsupport::small_cnn(true, 3);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    GAConfig cfg = quick(seed);
    cfg.budget = 0.6;
    const EvolveResult r = evolve(base, cfg);
    const ModelGraph out = apply_genome(base, r.best.genome);
    const double t = total_latency(trace(out, cfg.trace), cfg.trace);
    CHECK(r.best.report.latency == doctest::Approx(t).epsilon(1e-12));
    if (r.found_feasible) CHECK(t <= (1.0 + cfg.budget) * r.baseline_latency);
    for (std::uint64_t k = 0; k < 2; ++k) {
      const Tensor3 x = testsupport::random_input(base, k);
      CHECK(outputs_close(forward(out, x), forward(base, x), 1e-4, 1e-5));
    }
  }
}

TEST_CASE("budget zero is infeasible for any non-empty genome") {
  GAConfig cfg = quick();
  cfg.budget = 0.0;
  std::ostringstream progress;
  const EvolveResult r = evolve(testsupport::small_cnn(false), cfg, std::nullopt, &progress);
  if (r.best.genome.enabled_count() > 0) CHECK_FALSE(r.found_feasible);
  if (!r.found_feasible) CHECK(progress.str().find("warning") != std::string::npos);
}
