#include "aliasforge/metrics.hpp"

#include <string>

namespace aliasforge {

std::string_view to_string(FitnessMode mode) {
  return mode == FitnessMode::Hinge ? "hinge" : "verbatim";
}

FitnessMode parse_fitness_mode(std::string_view name) {
  if (name == "verbatim") return FitnessMode::Verbatim;
  if (name == "hinge") return FitnessMode::Hinge;
  throw MetricError("unknown fitness mode \"" + std::string(name) + "\" (verbatim|hinge)");
}

double budget_scaling(double latency, double baseline_latency, double budget, FitnessMode mode) {
  if (!(baseline_latency > 0.0)) throw MetricError("baseline latency must be positive");
  if (budget < 0.0) throw MetricError("budget must be non-negative");
  const double excess = (latency - (1.0 + budget) * baseline_latency) / baseline_latency;
  if (mode == FitnessMode::Hinge) {
    const double over = std::max(0.0, excess);
    return over * over + kHingeEpsilon;
  }
  return excess * excess;
}

FitnessReport fitness(const TraceMatrix& tm, double baseline_latency, double budget,
                      FitnessMode mode, const TraceParams& params) {
  if (tm.size() < 2) throw MetricError("fitness needs a trace with at least 2 kernels");
  FitnessReport r;
  const FeatureMatrix f = tm.features();
  for (int k = 0; k < kTraceFeatures; ++k) {
    r.stdev_per_feature[static_cast<std::size_t>(k)] = stdev(f.col(k));
    r.stdev_sum += r.stdev_per_feature[static_cast<std::size_t>(k)];
  }
  r.latency = total_latency(tm, params);
  r.baseline_latency = baseline_latency;
  r.budget = budget;
  r.scaling = budget_scaling(r.latency, baseline_latency, budget, mode);
  r.fitness = r.stdev_sum * r.scaling;
  return r;
}

bool budget_ok(const TraceMatrix& tm, double baseline_latency, double budget,
               const TraceParams& params) {
  return total_latency(tm, params) <= (1.0 + budget) * baseline_latency;
}

double ler(const LayerSequence& predicted, const LayerSequence& truth) {
  if (truth.empty()) throw MetricError("LER undefined for an empty ground-truth sequence");
  return static_cast<double>(edit_distance(predicted, truth)) / static_cast<double>(truth.size());
}

}  // namespace aliasforge
