#include "aliasforge/pipeline.hpp"

#include <algorithm>

#include "aliasforge/netgen.hpp"

namespace aliasforge {

std::vector<ModelGraph> generate_corpus(const RunConfig& cfg, std::string_view stream_name,
                                        std::size_t count, std::size_t first) {
  NetGenConfig ng = cfg.netgen;
  ng.weights = false;
  std::vector<ModelGraph> out;
  out.reserve(count);
  for (std::size_t i = first; i < first + count; ++i) out.push_back(generate(ng, cfg.stream(stream_name, i)));
  return out;
}

AttackPredictor train_attacker(const RunConfig& cfg, std::span<const ModelGraph> corpus,
                               std::string provenance) {
  const TraceDataset ds = build_dataset(corpus, cfg.trace_params(), std::move(provenance));
  return AttackPredictor::train(ds, cfg.predictor, cfg.knn_k);
}

ModelEvaluation evaluate_model(const RunConfig& cfg, const ModelGraph& model,
                               const AttackPredictor& predictor, std::uint64_t index,
                               std::ostream* progress) {
  const ModelGraph base = infer_shapes(strip_weights(model));
  ModelEvaluation ev;
  ev.search = evolve(base, cfg.ga_config(index), std::nullopt, progress);
  ev.report = evaluate_defense(base, ev.search.best.genome, predictor, cfg.trace_params());
  return ev;
}

nlohmann::json evaluation_json(const RunConfig& cfg, const ModelEvaluation& ev) {
  nlohmann::json doc = ev.report.to_json();
  doc["budget"] = cfg.ga.budget;
  doc["feasible"] = ev.search.found_feasible;
  doc["stdev_sum_original"] = ev.search.baseline_stdev_sum;
  doc["stdev_sum_obfuscated"] = ev.search.best.report.stdev_sum;
  doc["fitness"] = ev.search.best.report.fitness;
  doc["config_hash"] = cfg.hash();
  doc["seed"] = cfg.seed;
  return doc;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace aliasforge
