#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "aliasforge/graph.hpp"
#include "aliasforge/trace.hpp"

namespace aliasforge {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample standard deviation (N - 1 denominator) of a dense vector expression.
template <typename Derived>
double stdev(const Eigen::DenseBase<Derived>& values) {
  const Eigen::Index n = values.size();
  if (n < 2) throw MetricError("stdev needs at least 2 values (degenerate trace)");
  const auto x = values.derived().template cast<double>().array();
  const double mean = x.mean();
  return std::sqrt((x - mean).square().sum() / static_cast<double>(n - 1));
}

inline double stdev(std::span<const double> values) {
  return stdev(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

enum class FitnessMode {
  Verbatim,  // ((T - (1+B) T*) / T*)^2
  Hinge,     // max(0, (T - (1+B) T*) / T*)^2 + kHingeEpsilon
};

inline constexpr double kHingeEpsilon = 1e-6;

std::string_view to_string(FitnessMode mode);
FitnessMode parse_fitness_mode(std::string_view name);

struct FitnessReport {
  std::array<double, kTraceFeatures> stdev_per_feature{};
  double stdev_sum = 0.0;
  double latency = 0.0;
  double baseline_latency = 0.0;
  double budget = 0.0;
  double scaling = 0.0;
  double fitness = 0.0;
};

/// Budget penalty factor for latency T against baseline T* under budget B.
double budget_scaling(double latency, double baseline_latency, double budget,
                      FitnessMode mode = FitnessMode::Verbatim);

/// Sum of per-feature stdevs times the budget scaling; lower is better.
FitnessReport fitness(const TraceMatrix& tm, double baseline_latency, double budget,
                      FitnessMode mode = FitnessMode::Verbatim, const TraceParams& params = {});

/// T <= (1 + B) T*.
bool budget_ok(const TraceMatrix& tm, double baseline_latency, double budget,
               const TraceParams& params = {});

/// Levenshtein distance with unit insertion / deletion / substitution costs.
template <typename Seq>
std::size_t edit_distance(const Seq& a, const Seq& b) {
  const std::size_t m = std::size(b);
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> cur(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  std::size_t i = 0;
  for (const auto& x : a) {
    cur[0] = ++i;
    std::size_t k = 0;
    for (const auto& y : b) {
      cur[k + 1] = std::min({prev[k + 1] + 1, cur[k] + 1, prev[k] + (x == y ? 0 : 1)});
      ++k;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

/// Layer error rate: edit distance normalized by the true sequence length.
double ler(const LayerSequence& predicted, const LayerSequence& truth);

}  // namespace aliasforge
