#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "aliasforge/config.hpp"

using namespace aliasforge;

TEST_CASE("defaults") {
  const RunConfig cfg;
  CHECK(cfg.ga.population_size == 16);
  CHECK(cfg.ga.generations == 20);
  CHECK(cfg.ga.budget == 0.2);
  CHECK(cfg.ga.fitness_mode == FitnessMode::Verbatim);
  CHECK(cfg.trace.macs_per_cycle == 64.0);
  CHECK(cfg.trace.cycles_per_element == 1.0);
  CHECK(cfg.trace.bytes_per_cycle == 256.0);
  CHECK(cfg.trace.noise_sigma == 0.0);
  CHECK(cfg.predictor == PredictorKind::KNN);
}

TEST_CASE("text parsing with sections, comments and quotes") {
  RunConfig cfg;
  cfg.load_text(R"(
seed = 7   # trailing comment
[ga]
budget = 0.6
population_size = 8
[fitness]
mode = "hinge"
[trace]
noise_sigma = 0.05
[netgen]
preset = compact
[attack]
predictor = gaussian-nb
)");
  CHECK(cfg.seed == 7);
  CHECK(cfg.ga.budget == 0.6);
  CHECK(cfg.ga.population_size == 8);
  CHECK(cfg.ga.fitness_mode == FitnessMode::Hinge);
  CHECK(cfg.trace.noise_sigma == 0.05);
  CHECK(cfg.netgen.input.h == 16);
  CHECK(cfg.predictor == PredictorKind::GaussianNB);
}

TEST_CASE("errors name the origin and line") {
  RunConfig cfg;
  try {
    cfg.load_text("seed = 1\nga.budgett = 2\n", "run.conf");
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.conf:2") != std::string::npos);
  }
  CHECK_THROWS_AS(cfg.load_text("[ga\n"), ConfigError);
  CHECK_THROWS_AS(cfg.load_text("just words\n"), ConfigError);
  CHECK_THROWS_AS(cfg.set("ga.budget", "lots"), ConfigError);
  CHECK_THROWS_AS(cfg.set("ga.population_size", "7"), ConfigError);
  CHECK_THROWS_AS(cfg.set("trace.include_activations", "maybe"), ConfigError);
  CHECK_THROWS_AS(RunConfig{}.set("trace.bandwidth", "0"), ConfigError);
  CHECK_THROWS_AS(cfg.set("fitness.mode", "soft"), ConfigError);
  CHECK_THROWS_AS(cfg.load_file("/nonexistent/run.conf"), ConfigError);
}

TEST_CASE("hash tracks every setting and nothing else") {
  const RunConfig a;
  RunConfig b;
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  b.load_text("# only a comment\n\n");
  CHECK(a.hash() == b.hash());
  for (const auto& [key, value] :
       std::vector<std::pair<std::string, std::string>>{{"seed", "1"},
                                                        {"ga.budget", "0.6"},
                                                        {"trace.lambda", "32"},
                                                        {"netgen.conv_max", "10"},
                                                        {"attack.k", "3"},
                                                        {"fitness.mode", "hinge"}}) {
    RunConfig c;
    c.set(key, value);
    CHECK_MESSAGE(c.hash() != a.hash(), key);
  }
  RunConfig c;
  c.set("ga.budget", "0.2");
  CHECK(c.hash() == a.hash());
  CHECK(a.canonical().find("ga.budget=0.2") != std::string::npos);
}

TEST_CASE("streams and derived settings") {
  RunConfig cfg;
  CHECK(cfg.stream("ga", 0) != cfg.stream("ga", 1));
  CHECK(cfg.stream("ga", 0) != cfg.stream("noise", 0));
  CHECK(cfg.ga_config(3).seed == cfg.stream("ga", 3));
  CHECK(cfg.trace_params().seed == cfg.stream("noise"));
  cfg.set("trace.seed", "99");
  CHECK(cfg.trace_params().seed == 99);
  CHECK(cfg.ga_config(0).trace.seed == 99);
  RunConfig other;
  other.seed = 1;
  CHECK(other.stream("ga") != RunConfig{}.stream("ga"));
}
