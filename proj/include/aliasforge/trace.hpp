#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "aliasforge/graph.hpp"

namespace aliasforge {

/// Analytic per-kernel cost model (roofline style).
struct TraceParams {
  double macs_per_cycle = 64.0;       // lambda
  double cycles_per_element = 1.0;    // kappa, element-wise kernels
  double bytes_per_cycle = 256.0;     // memory bandwidth
  int element_bytes = 4;
  double noise_sigma = 0.0;           // log-normal multiplicative jitter
  std::uint64_t seed = 0;
  SequenceOptions sequence;
};

struct KernelTrace {
  NodeId node_id = 0;
  LayerKind label = LayerKind::Conv2D;  // ground truth; not visible to the attacker
  double cycles = 0.0;
  double read_bytes = 0.0;
  double write_bytes = 0.0;

  friend bool operator==(const KernelTrace&, const KernelTrace&) = default;
};

inline constexpr int kTraceFeatures = 3;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, kTraceFeatures>;

struct TraceMatrix {
  std::vector<KernelTrace> rows;
  bool labeled = true;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  /// N x 3 matrix of (cycles, read_bytes, write_bytes).
  FeatureMatrix features() const;
  LayerSequence labels() const;

  friend bool operator==(const TraceMatrix&, const TraceMatrix&) = default;
};

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cost of one kernel from its shape-annotated node and its inputs' shapes.
KernelTrace trace_node(const LayerSpec& node, const std::vector<Shape>& inputs,
                       const TraceParams& params = {});

/// Rows in to_sequence order. Requires a shape-annotated graph. Traces
/// depend only on structure and dimensions, never on weight values.
TraceMatrix trace(const ModelGraph& graph, const TraceParams& params = {});

/// Roofline latency of one kernel: max(cycles, bytes / bandwidth).
double kernel_latency(const KernelTrace& row, const TraceParams& params = {});
/// Sum of per-kernel roofline latencies.
double total_latency(const TraceMatrix& tm, const TraceParams& params = {});

/// CSV: header `node_id,label,cycles,read_bytes,write_bytes`; the label column
/// is left empty when the matrix is unlabeled (attack-facing).
std::string export_csv(const TraceMatrix& tm);
TraceMatrix import_csv(std::string_view text);
TraceMatrix strip_labels(TraceMatrix tm);

}  // namespace aliasforge
