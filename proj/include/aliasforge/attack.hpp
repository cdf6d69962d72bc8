#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "aliasforge/graph.hpp"
#include "aliasforge/trace.hpp"
#include "aliasforge/transforms.hpp"

namespace aliasforge {

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-kernel features: log of (cycles, read, write, read/write, cycles/read).
inline constexpr int kAttackFeatures = 5;
using AttackMatrix = Eigen::Matrix<double, Eigen::Dynamic, kAttackFeatures>;
using AttackRow = Eigen::Matrix<double, 1, kAttackFeatures>;

/// Log-transformed features, one row per trace row, not yet normalized.
AttackMatrix attack_features(const TraceMatrix& tm);

struct TraceDataset {
  AttackMatrix features;  // z-normalized with `mean` / `scale`
  std::vector<LayerKind> labels;
  AttackRow mean = AttackRow::Zero();
  AttackRow scale = AttackRow::Ones();
  std::string provenance;

  std::size_t size() const { return labels.size(); }
};

/// One labeled sample per kernel of every corpus graph (graphs must be
/// shape-annotated or annotatable). Throws AttackError on an empty corpus.
TraceDataset build_dataset(std::span<const ModelGraph> corpus, const TraceParams& params = {},
                           std::string provenance = {});

enum class PredictorKind { NearestCentroid, GaussianNB, KNN };

std::string_view to_string(PredictorKind kind);
PredictorKind parse_predictor_kind(std::string_view name);

/// Per-kernel layer-type classifier fitted on a TraceDataset. Prediction is a
/// pure function of the trained state.
class AttackPredictor {
 public:
  static AttackPredictor train(const TraceDataset& ds, PredictorKind kind, int k = 5);

  PredictorKind kind() const { return kind_; }
  const std::vector<LayerKind>& classes() const { return classes_; }
  /// Row i of the result is the centroid / class mean of classes()[i].
  const Eigen::MatrixXd& class_means() const { return means_; }

  /// Classifies already-normalized rows.
  std::vector<LayerKind> classify(const AttackMatrix& normalized) const;
  /// One predicted label per trace row, in trace order.
  LayerSequence predict_sequence(const TraceMatrix& tm) const;

  nlohmann::json to_json() const;
  static AttackPredictor from_json(const nlohmann::json& doc);

 private:
  LayerKind classify_row(const AttackRow& x) const;

  PredictorKind kind_ = PredictorKind::NearestCentroid;
  int k_ = 5;
  AttackRow mean_ = AttackRow::Zero();
  AttackRow scale_ = AttackRow::Ones();
  std::vector<LayerKind> classes_;
  Eigen::MatrixXd means_;      // classes x features
  Eigen::MatrixXd variances_;  // GaussianNB only
  Eigen::VectorXd log_priors_;
  AttackMatrix exemplars_;     // KNN only
  std::vector<int> exemplar_class_;
};

/// Training/held-out split by whole graph: a seeded shuffle of graph indices,
/// the first 80% train.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_graph(std::size_t n_graphs,
                                                                             std::uint64_t seed,
                                                                             double train_fraction = 0.8);

struct DefenseReport {
  std::string model;
  LayerSequence original;
  LayerSequence obfuscated;
  LayerSequence extracted_org;
  LayerSequence extracted_obf;
  double ler_extracted_org = 0.0;  // LER(extracted_org, original)
  double ler_extracted_obf = 0.0;  // LER(extracted_obf, original)
  double ler_obfuscated = 0.0;     // LER(obfuscated, original)
  double baseline_latency = 0.0;
  double latency = 0.0;
  double latency_ratio = 1.0;      // T / T*

  nlohmann::json to_json() const;
  static DefenseReport from_json(const nlohmann::json& doc);
  std::string table() const;
};

/// Traces the model before and after applying `genome`, attacks both traces and
/// scores the extracted sequences against the original layer sequence.
DefenseReport evaluate_defense(const ModelGraph& base, const Genome& genome,
                               const AttackPredictor& predictor, const TraceParams& params = {});

}  // namespace aliasforge
