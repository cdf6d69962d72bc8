// alias-forge: command-line front end (gen, obfuscate, trace, attack, eval, report).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "aliasforge/attack.hpp"
#include "aliasforge/config.hpp"
#include "aliasforge/ga.hpp"
#include "aliasforge/netgen.hpp"
#include "aliasforge/pipeline.hpp"
#include "aliasforge/tensor.hpp"
#include "aliasforge/trace.hpp"
#include "aliasforge/transforms.hpp"

namespace fs = std::filesystem;
using namespace aliasforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> budget;
  std::optional<std::string> fitness_mode;
  std::optional<double> noise_sigma;
  std::optional<std::string> preset;
};

RunConfig make_config(const GlobalOptions& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.load_file(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got \"" + kv + "\"");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) cfg.seed = *g.seed;
  if (g.preset) cfg.set("netgen.preset", *g.preset);
  if (g.budget) cfg.ga.budget = *g.budget;
  if (g.fitness_mode) cfg.set("fitness.mode", *g.fitness_mode);
  if (g.noise_sigma) cfg.trace.noise_sigma = *g.noise_sigma;
  cfg.netgen.check();
  cfg.ga.check();
  return cfg;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error(dir.string() + ": " + ec.message());
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DocumentError(path + ": " + e.what());
  }
}

// Corpus directory: models listed by manifest.json, else every *.json sorted by name.
std::vector<ModelGraph> load_corpus(const std::string& dir) {
  std::vector<std::string> files;
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest)) {
    const nlohmann::json doc = read_json(manifest.string());
    for (const auto& m : doc.at("models"))
      files.push_back((fs::path(dir) / m.at("file").get<std::string>()).string());
  } else {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir + ": not a corpus directory");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".json") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
  }
  std::vector<ModelGraph> out;
  for (const auto& f : files) out.push_back(load_model(f));
  return out;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg, int count, const std::string& out_dir) {
  if (count < 0) throw UsageError("--count must be >= 0");
  ensure_dir(out_dir);
  nlohmann::ordered_json manifest;
  manifest["seed"] = cfg.seed;
  manifest["config_hash"] = cfg.hash();
  manifest["preset"] = cfg.netgen_preset;
  manifest["count"] = count;
  manifest["models"] = nlohmann::ordered_json::array();
  NetGenConfig ng = cfg.netgen;
  ng.weights = false;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = cfg.stream("netgen", static_cast<std::uint64_t>(i));
    const ModelGraph g = generate(ng, seed);
    char name[32];
    std::snprintf(name, sizeof name, "model_%05d.json", i);
    write_text(fs::path(out_dir) / name, serialize(g));
    manifest["models"].push_back({{"file", name},
                                  {"name", g.name},
                                  {"seed", seed},
                                  {"nodes", g.nodes.size()},
                                  {"kernels", kernel_nodes(g, cfg.trace.sequence).size()},
                                  {"structure_hash", hex64(structure_hash(g))}});
  }
  write_text(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << count << " models to " << out_dir << " (config " << cfg.hash() << ")\n";
  return kExitOk;
}

int cmd_obfuscate(const RunConfig& cfg, const std::string& model_path, const std::string& out_dir,
                  bool verify) {
  ModelGraph base = infer_shapes(load_model(model_path));
  base = materialize_weights(base, cfg.stream("weights"));
  const EvolveResult r = evolve(base, cfg.ga_config(), std::nullopt, &std::cerr);
  const ModelGraph obfuscated = apply_genome(base, r.best.genome);

  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "genome.json", to_json(r.best.genome).dump(2) + "\n");
  write_text(fs::path(out_dir) / "obfuscated.json", serialize(obfuscated));
  write_text(fs::path(out_dir) / "ga_log.csv", log_csv(r.log));

  const auto kernels = [&](const ModelGraph& g) { return kernel_nodes(g, cfg.trace.sequence).size(); };
  std::cout << "model            " << base.name << '\n'
            << "config_hash      " << cfg.hash() << '\n'
            << "kernels          " << kernels(base) << " -> " << kernels(obfuscated) << '\n'
            << "stdev_sum        " << fmt(r.baseline_stdev_sum, 1) << " -> "
            << fmt(r.best.report.stdev_sum, 1) << " (ratio "
            << fmt(r.best.report.stdev_sum / r.baseline_stdev_sum) << ")\n"
            << "latency_ratio    " << fmt(r.best.report.latency / r.baseline_latency) << '\n'
            << "feasible         " << (r.found_feasible ? "yes" : "no") << '\n';
  if (verify) {
    Rng rng(cfg.stream("verify"));
    const Tensor3 x = Tensor3::random(base.node(base.input_id).input_shape(), rng);
    const bool same = outputs_close(forward(obfuscated, x), forward(base, x), 1e-4, 1e-6);
    std::cout << "function_preserved " << (same ? "yes" : "NO") << '\n';
    if (!same) return kExitValidation;
  }
  if (!r.found_feasible) {
    std::cerr << "warning: no candidate met the latency budget " << cfg.ga.budget << '\n';
    return kExitInfeasible;
  }
  return kExitOk;
}

int cmd_trace(const RunConfig& cfg, const std::string& model_path, const std::string& genome_path,
              bool strip) {
  ModelGraph g = infer_shapes(load_model(model_path));
  if (!genome_path.empty()) g = apply_genome(g, genome_from_json(read_json(genome_path), g));
  TraceMatrix tm = trace(g, cfg.trace_params());
  if (strip) tm = strip_labels(std::move(tm));
  std::cout << export_csv(tm);
  return kExitOk;
}

int cmd_attack_train(const RunConfig& cfg, const std::string& corpus_dir, const std::string& out) {
  if (corpus_dir.empty() || out.empty()) throw UsageError("attack --train needs --corpus and --out");
  const std::vector<ModelGraph> corpus = load_corpus(corpus_dir);
  if (corpus.empty()) throw AttackError(corpus_dir + ": corpus is empty");
  // Identify the corpus by content, not by where it happens to live.
  std::string hashes;
  for (const auto& g : corpus) hashes += hex64(structure_hash(g));
  const std::string corpus_hash = hex64(fnv1a(hashes));
  const AttackPredictor p = train_attacker(cfg, corpus, corpus_hash);
  nlohmann::json doc = p.to_json();
  doc["provenance"] = {{"corpus_hash", corpus_hash}, {"models", corpus.size()}, {"config_hash", cfg.hash()}};
  const fs::path out_path(out);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  write_text(out_path, doc.dump() + "\n");
  std::cout << "trained " << to_string(p.kind()) << " on " << corpus.size() << " models ("
            << p.classes().size() << " classes) -> " << out << '\n';
  return kExitOk;
}

int cmd_attack_predict(const RunConfig& cfg, const std::string& victim, const std::string& predictor_path,
                       const std::string& truth_path) {
  if (predictor_path.empty()) throw UsageError("attack --predict needs --predictor");
  const AttackPredictor p = AttackPredictor::from_json(read_json(predictor_path));
  TraceMatrix tm;
  if (fs::path(victim).extension() == ".csv")
    tm = import_csv(read_text(victim));
  else
    tm = trace(infer_shapes(load_model(victim)), cfg.trace_params());
  const LayerSequence predicted = p.predict_sequence(tm);
  std::cout << "predicted        " << to_string(predicted) << '\n';
  if (truth_path.empty()) return kExitOk;

  const ModelGraph truth = infer_shapes(load_model(truth_path));
  const TraceMatrix truth_trace = trace(truth, cfg.trace_params());
  const LayerSequence original = truth_trace.labels();
  if (original.empty()) throw AttackError(truth_path + ": model has no kernels");
  std::cout << "LER(extracted_org, original) " << fmt(ler(p.predict_sequence(truth_trace), original)) << '\n'
            << "LER(extracted_obf, original) " << fmt(ler(predicted, original)) << '\n';
  if (tm.labeled)
    std::cout << "LER(obfuscated, original)    " << fmt(ler(tm.labels(), original)) << '\n';
  return kExitOk;
}

std::string batch_table(const nlohmann::json& doc) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "model" << std::right << std::setw(9) << "kernels"
     << std::setw(10) << "ler_org" << std::setw(10) << "ler_obf" << std::setw(10) << "ler_gray"
     << std::setw(10) << "T/T*" << std::setw(10) << "feasible" << '\n';
  auto row = [&](const std::string& name, const std::string& kernels, double a, double b, double c,
                 double d, const std::string& feasible) {
    os << std::left << std::setw(28) << name << std::right << std::setw(9) << kernels << std::setw(10)
       << fmt(a) << std::setw(10) << fmt(b) << std::setw(10) << fmt(c) << std::setw(10) << fmt(d)
       << std::setw(10) << feasible << '\n';
  };
  for (const auto& m : doc.at("models"))
    row(m.at("model").get<std::string>(),
        std::to_string(m.at("original").size()) + "/" + std::to_string(m.at("obfuscated").size()),
        m.at("ler_extracted_org").get<double>(), m.at("ler_extracted_obf").get<double>(),
        m.at("ler_obfuscated").get<double>(), m.at("latency_ratio").get<double>(),
        m.at("feasible").get<bool>() ? "yes" : "no");
  const auto& med = doc.at("median");
  row("median", "", med.at("ler_extracted_org").get<double>(), med.at("ler_extracted_obf").get<double>(),
      med.at("ler_obfuscated").get<double>(), med.at("latency_ratio").get<double>(), "");
  return os.str();
}

std::string single_table(const nlohmann::json& doc) {
  std::ostringstream os;
  os << DefenseReport::from_json(doc).table();
  if (doc.contains("stdev_sum_original"))
    os << "stdev_sum                    " << fmt(doc.at("stdev_sum_original").get<double>(), 1) << " -> "
       << fmt(doc.at("stdev_sum_obfuscated").get<double>(), 1) << '\n';
  if (doc.contains("feasible"))
    os << "within budget                " << (doc.at("feasible").get<bool>() ? "yes" : "no") << '\n';
  return os.str();
}

std::string render(const nlohmann::json& doc) {
  std::string out = doc.contains("models") ? batch_table(doc) : single_table(doc);
  if (doc.contains("config_hash"))
    out += "config_hash " + doc.at("config_hash").get<std::string>() + " seed " +
           std::to_string(doc.at("seed").get<std::uint64_t>()) + "\n";
  return out;
}

int cmd_eval(const RunConfig& cfg, const std::string& model_path, const std::string& corpus_dir,
             const std::string& predictor_path, const std::string& out) {
  if (model_path.empty() == corpus_dir.empty())
    throw UsageError("eval needs exactly one of MODEL or --corpus");
  std::optional<AttackPredictor> predictor;
  if (!predictor_path.empty()) {
    predictor = AttackPredictor::from_json(read_json(predictor_path));
  } else {
    std::cerr << "training " << to_string(cfg.predictor) << " on " << cfg.train_corpus
              << " generated graphs\n";
    const auto corpus = generate_corpus(cfg, "attack-corpus", static_cast<std::size_t>(cfg.train_corpus));
    predictor = train_attacker(cfg, corpus, "generated");
  }

  nlohmann::json doc;
  if (!model_path.empty()) {
    const ModelEvaluation ev = evaluate_model(cfg, load_model(model_path), *predictor, 0, &std::cerr);
    doc = evaluation_json(cfg, ev);
  } else {
    const std::vector<ModelGraph> corpus = load_corpus(corpus_dir);
    if (corpus.empty()) throw AttackError(corpus_dir + ": corpus is empty");
    doc["config_hash"] = cfg.hash();
    doc["seed"] = cfg.seed;
    doc["budget"] = cfg.ga.budget;
    doc["models"] = nlohmann::json::array();
    std::vector<double> org, obf, gray, ratio;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const ModelEvaluation ev = evaluate_model(cfg, corpus[i], *predictor, i);
      std::cerr << "[" << i + 1 << "/" << corpus.size() << "] " << corpus[i].name << '\n';
      doc["models"].push_back(evaluation_json(cfg, ev));
      org.push_back(ev.report.ler_extracted_org);
      obf.push_back(ev.report.ler_extracted_obf);
      gray.push_back(ev.report.ler_obfuscated);
      ratio.push_back(ev.report.latency_ratio);
    }
    doc["median"] = {{"ler_extracted_org", median(org)},
                     {"ler_extracted_obf", median(obf)},
                     {"ler_obfuscated", median(gray)},
                     {"latency_ratio", median(ratio)}};
  }
  if (out.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    const fs::path out_path(out);
    if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
    write_text(out_path, doc.dump(2) + "\n");
    std::cout << render(doc);
  }
  return kExitOk;
}

int cmd_report(const std::string& path) {
  std::cout << render(read_json(path));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alias-forge: DNN layer-architecture obfuscation and side-channel evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--budget", g.budget, "latency budget B");
  app.add_option("--fitness-mode", g.fitness_mode, "verbatim or hinge");
  app.add_option("--noise-sigma", g.noise_sigma, "log-normal trace noise");
  app.add_option("--preset", g.preset, "netgen preset: default, compact, alternate");

  int count = 0;
  std::string out, corpus, predictor, model, genome, truth, predict;
  bool verify = false, strip = false, train = false;

  auto* gen = app.add_subcommand("gen", "generate a random model corpus");
  gen->add_option("--count", count, "number of models")->required();
  gen->add_option("--out", out, "output directory")->required();

  auto* obf = app.add_subcommand("obfuscate", "search an obfuscation genome for a model");
  obf->add_option("model", model, "model document")->required()->check(CLI::ExistingFile);
  obf->add_option("--out", out, "output directory")->required();
  obf->add_flag("--verify", verify, "check forward equivalence on a random input");

  auto* tr = app.add_subcommand("trace", "print a model's kernel trace as CSV");
  tr->add_option("model", model, "model document")->required()->check(CLI::ExistingFile);
  tr->add_option("--genome", genome, "apply this genome first")->check(CLI::ExistingFile);
  tr->add_flag("--strip-labels", strip, "omit the label column");

  auto* atk = app.add_subcommand("attack", "train the attacker or extract a victim's layer sequence");
  atk->add_flag("--train", train, "train on --corpus, write --out");
  atk->add_option("--predict", predict, "victim model (.json) or trace (.csv)")->check(CLI::ExistingFile);
  atk->add_option("--corpus", corpus, "training corpus directory");
  atk->add_option("--out", out, "predictor output path");
  atk->add_option("--predictor", predictor, "trained predictor document")->check(CLI::ExistingFile);
  atk->add_option("--truth", truth, "original model, enables LER output")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "obfuscate, trace and attack; print the defense report");
  ev->add_option("model", model, "model document")->check(CLI::ExistingFile);
  ev->add_option("--corpus", corpus, "evaluate every model of a corpus");
  ev->add_option("--predictor", predictor, "trained predictor (default: train on a generated corpus)")
      ->check(CLI::ExistingFile);
  ev->add_option("--out", out, "write the report JSON here and print a table");

  std::string report_path;
  auto* rep = app.add_subcommand("report", "render a report JSON as a table");
  rep->add_option("report", report_path, "report document")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const RunConfig cfg = make_config(g);
    if (*gen) return cmd_gen(cfg, count, out);
    if (*obf) return cmd_obfuscate(cfg, model, out, verify);
    if (*tr) return cmd_trace(cfg, model, genome, strip);
    if (*atk) {
      if (train == !predict.empty()) throw UsageError("attack needs exactly one of --train or --predict");
      return train ? cmd_attack_train(cfg, corpus, out) : cmd_attack_predict(cfg, predict, predictor, truth);
    }
    if (*ev) return cmd_eval(cfg, model, corpus, predictor, out);
    if (*rep) return cmd_report(report_path);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitUsage;
}
