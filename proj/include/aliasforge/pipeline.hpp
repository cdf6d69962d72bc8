#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aliasforge/attack.hpp"
#include "aliasforge/config.hpp"
#include "aliasforge/ga.hpp"

namespace aliasforge {

/// `count` weightless netgen graphs; graph i is seeded from stream(stream_name, i).
std::vector<ModelGraph> generate_corpus(const RunConfig& cfg, std::string_view stream_name,
                                        std::size_t count, std::size_t first = 0);

/// Trains the configured predictor kind on traces of `corpus`.
AttackPredictor train_attacker(const RunConfig& cfg, std::span<const ModelGraph> corpus,
                               std::string provenance = {});

struct ModelEvaluation {
  DefenseReport report;
  EvolveResult search;
};

/// Obfuscate (evolve with GA stream `index`), trace and attack one model.
ModelEvaluation evaluate_model(const RunConfig& cfg, const ModelGraph& model,
                               const AttackPredictor& predictor, std::uint64_t index = 0,
                               std::ostream* progress = nullptr);

/// Report document: the DefenseReport plus search summary and provenance.
nlohmann::json evaluation_json(const RunConfig& cfg, const ModelEvaluation& ev);

double median(std::vector<double> values);

}  // namespace aliasforge
