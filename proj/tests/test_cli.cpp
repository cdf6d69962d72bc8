#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aliasforge/graph.hpp"
#include "aliasforge/pipeline.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aliasforge-cli-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

Run cli(const std::string& args) {
  const fs::path dir = scratch("io");
  fs::create_directories(dir);
  const std::string cmd = std::string("'") + ALIASFORGE_CLI + "' " + args + " > '" +
                          (dir / "out").string() + "' 2> '" + (dir / "err").string() + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "out");
  r.err = slurp(dir / "err");
  return r;
}

std::string fixture_path() { return testsupport::data_path("resnet20-like.json"); }

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("gen --out /tmp/x").code == 1);
  CHECK(cli("--set ga.nope=1 trace " + fixture_path()).code == 1);
  CHECK(cli("--set ga.population_size=7 trace " + fixture_path()).code == 1);
  CHECK(cli("attack").code == 1);
  CHECK(cli("eval").code == 1);
  CHECK(cli("--help").code == 0);
}

TEST_CASE("gen: empty corpus and determinism") {
  const fs::path empty = scratch("empty");
  REQUIRE(cli("gen --count 0 --out " + empty.string()).code == 0);
  CHECK(std::distance(fs::directory_iterator(empty), fs::directory_iterator{}) == 1);
  CHECK(read_json(empty / "manifest.json").at("models").empty());

  const fs::path a = scratch("a"), b = scratch("b");
  REQUIRE(cli("--preset compact gen --count 10 --out " + a.string()).code == 0);
  REQUIRE(cli("--preset compact gen --count 10 --out " + b.string()).code == 0);
  const nlohmann::json manifest = read_json(a / "manifest.json");
  CHECK(manifest.at("models").size() == 10);
  CHECK(manifest.at("seed") == 0);
  for (const auto& entry : fs::directory_iterator(a))
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
  const aliasforge::ModelGraph g = aliasforge::load_model((a / "model_00000.json").string());
  CHECK(aliasforge::validate(g).ok());
  CHECK(manifest.at("models")[0].at("structure_hash") == aliasforge::hex64(aliasforge::structure_hash(g)));
}

TEST_CASE("trace: golden CSV, genome and stripped labels") {
  const Run r = cli("trace " + fixture_path());
  REQUIRE(r.code == 0);
  CHECK(r.out == slurp(testsupport::data_path("resnet20-like.trace.csv")));
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 23);

  const Run bare = cli("trace --strip-labels " + fixture_path());
  CHECK(bare.code == 0);
  CHECK(bare.out.find("Conv2D") == std::string::npos);
}

TEST_CASE("obfuscate: outputs, budget zero warning, budget trend") {
  const fs::path out = scratch("obf");
  const Run r = cli("--set ga.generations=6 obfuscate --verify --out " + out.string() + " " + fixture_path());
  CHECK((r.code == 0 || r.code == 3));
  CHECK(fs::exists(out / "genome.json"));
  CHECK(fs::exists(out / "obfuscated.json"));
  const std::string log = slurp(out / "ga_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 16 * 6 + 1);
  CHECK(r.out.find("stdev_sum") != std::string::npos);
  CHECK(aliasforge::validate(aliasforge::load_model((out / "obfuscated.json").string())).ok());

  const Run traced = cli("trace --genome " + (out / "genome.json").string() + " " + fixture_path());
  CHECK(traced.code == 0);
  CHECK(std::count(traced.out.begin(), traced.out.end(), '\n') > 23);

  const Run zero = cli("--budget 0 --set ga.generations=3 obfuscate --out " + scratch("zero").string() +
                       " " + fixture_path());
  CHECK(zero.code == 3);
  CHECK(zero.err.find("warning") != std::string::npos);

  const fs::path tight = scratch("tight.json"), loose = scratch("loose.json");
  REQUIRE(cli("--budget 0.2 eval --out " + tight.string() + " " + fixture_path()).code == 0);
  REQUIRE(cli("--budget 0.6 eval --out " + loose.string() + " " + fixture_path()).code == 0);
  CHECK(read_json(loose).at("stdev_sum_obfuscated").get<double>() <=
        read_json(tight).at("stdev_sum_obfuscated").get<double>());
}

TEST_CASE("attack: train, predict, round trip through a CSV trace") {
  const fs::path corpus = scratch("train-corpus");
  REQUIRE(cli("gen --count 60 --out " + corpus.string()).code == 0);
  const fs::path pred = scratch("predictor.json");
  REQUIRE(cli("attack --train --corpus " + corpus.string() + " --out " + pred.string()).code == 0);
  CHECK(read_json(pred).contains("provenance"));

  const std::string victim = (corpus / "model_00000.json").string();
  const Run plain = cli("attack --predict " + victim + " --predictor " + pred.string());
  CHECK(plain.code == 0);
  CHECK(plain.out.find("Conv2D") != std::string::npos);
  CHECK(plain.out.find("LER") == std::string::npos);

  const fs::path csv = scratch("victim.csv");
  {
    const Run t = cli("trace --strip-labels " + victim);
    std::ofstream(csv) << t.out;
  }
  const Run from_csv = cli("attack --predict " + csv.string() + " --predictor " + pred.string());
  CHECK(from_csv.code == 0);
  CHECK(from_csv.out == plain.out);

  const Run truth = cli("attack --predict " + victim + " --predictor " + pred.string() + " --truth " + victim);
  CHECK(truth.code == 0);
  CHECK(truth.out.find("LER") != std::string::npos);

  const fs::path none = scratch("no-models");
  REQUIRE(cli("gen --count 0 --out " + none.string()).code == 0);
  CHECK(cli("attack --train --corpus " + none.string() + " --out " + scratch("p.json").string()).code == 2);
}

TEST_CASE("eval: golden report, provenance and batch medians") {
  const fs::path out = scratch("eval.json");
  const Run r = cli("eval --out " + out.string() + " " + fixture_path());
  REQUIRE(r.code == 0);
  CHECK(slurp(out) == slurp(testsupport::data_path("resnet20-like.eval.json")));
  const aliasforge::RunConfig cfg;
  CHECK(read_json(out).at("config_hash") == cfg.hash());
  CHECK(r.out.find(cfg.hash()) != std::string::npos);

  const Run rendered = cli("report " + out.string());
  CHECK(rendered.code == 0);
  CHECK(rendered.out == r.out);

  const fs::path corpus = scratch("victims");
  REQUIRE(cli("--preset compact gen --count 4 --out " + corpus.string()).code == 0);
  const fs::path batch = scratch("batch.json");
  REQUIRE(cli("--preset compact --set ga.generations=4 --set attack.train_corpus=100 eval --corpus " +
              corpus.string() + " --out " + batch.string()).code == 0);
  const nlohmann::json doc = read_json(batch);
  REQUIRE(doc.at("models").size() == 4);
  std::vector<double> obf;
  for (const auto& m : doc.at("models")) obf.push_back(m.at("ler_extracted_obf").get<double>());
  CHECK(doc.at("median").at("ler_extracted_obf").get<double>() == aliasforge::median(obf));
}
