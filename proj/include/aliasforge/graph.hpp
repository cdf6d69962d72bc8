#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace aliasforge {

enum class LayerKind {
  Conv2D,
  FullyConnected,
  ReLU,
  BatchNorm,
  MaxPool2D,
  AvgPool2D,
  Add,
  Concat,
  Slice,  // zero-copy channel view; never emits a kernel
  Input,
  Output,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);

/// Controls which node kinds appear in a linearized sequence / trace.
struct SequenceOptions {
  bool include_activations = false;  // ReLU and BatchNorm
};

bool emits_kernel(LayerKind kind, const SequenceOptions& opts = {});

using NodeId = std::int64_t;

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t elements() const { return std::int64_t{c} * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

struct Weights {
  std::vector<int> shape;
  std::vector<float> data;

  friend bool operator==(const Weights&, const Weights&) = default;
};

/// One node of the computation graph. Field meaning by kind:
///   Conv2D          k1 x k2 kernel, c -> j channels, stride, groups (depthwise: groups == c == j);
///                   weights k1 x k2 x (c/groups) x j, row-major.
///   FullyConnected  c = flattened input size, j outputs; weights c x j.
///   BatchNorm       weights 4 x c: scale, shift, mean, variance.
///   Max/AvgPool2D   k1 x k2 window, stride, valid windows.
///   Slice           channels [offset, offset + j) of a c-channel input.
///   Concat          c = j = sum of input channels.
/// c, in_h, in_w always describe the (first) input; Input declares the model input.
struct LayerSpec {
  NodeId id = 0;
  LayerKind kind = LayerKind::Input;
  int k1 = 1;
  int k2 = 1;
  int c = 0;
  int j = 0;
  int stride = 1;
  int in_h = 0;
  int in_w = 0;
  int groups = 1;
  int offset = 0;
  std::vector<NodeId> inputs;
  std::optional<Weights> weights;
  std::optional<Shape> out;  // filled by infer_shapes

  /// Conv2D, FullyConnected and BatchNorm carry weights.
  bool takes_weights() const;
  std::vector<int> expected_weight_shape() const;
  std::size_t expected_weight_count() const;
  Shape input_shape() const { return {c, in_h, in_w}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelGraph {
  std::string name;
  NodeId input_id = 0;
  NodeId output_id = 0;
  std::map<NodeId, LayerSpec> nodes;

  const LayerSpec& node(NodeId id) const;
  LayerSpec& node(NodeId id);
  bool contains(NodeId id) const { return nodes.contains(id); }
  NodeId next_id() const { return nodes.empty() ? 0 : nodes.rbegin()->first + 1; }
  /// Nodes reading `id`, ascending by id.
  std::vector<NodeId> consumers(NodeId id) const;
  bool shapes_annotated() const;
  bool has_any_weights() const;

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

enum class ViolationKind {
  Structure,
  Cycle,
  DanglingInput,
  Unreachable,
  ShapeMismatch,
  WeightMismatch,
  BadParameter,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  NodeId node;
  ViolationKind kind;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind kind, std::optional<NodeId> node = std::nullopt) const;
  std::string summary() const;
};

ValidationReport validate(const ModelGraph& graph);

/// Annotates every node's output shape. Conv2D uses same padding
/// (out = ceil(in / stride)); pools use valid windows. Throws GraphError when
/// the graph does not validate.
ModelGraph infer_shapes(const ModelGraph& graph);

/// Output shape of a single node given its inputs' shapes; nullopt + reason on
/// inconsistency.
std::optional<Shape> node_output_shape(const LayerSpec& node, const std::vector<Shape>& inputs,
                                       std::string* reason = nullptr);

/// Kahn topological order with ascending-id tie-break. Throws GraphError on a cycle.
std::vector<NodeId> topological_order(const ModelGraph& graph);

/// Kernel-emitting node ids in topological order.
std::vector<NodeId> kernel_nodes(const ModelGraph& graph, const SequenceOptions& opts = {});

using LayerSequence = std::vector<LayerKind>;

LayerSequence to_sequence(const ModelGraph& graph, const SequenceOptions& opts = {});
std::string to_string(const LayerSequence& seq);

/// Fills every missing weight payload deterministically from (seed, node id):
/// conv/FC ~ N(0, 0.1); BatchNorm scale ~ 1 + N(0, 0.1), shift/mean ~ N(0, 0.1),
/// variance ~ 1 + |N(0, 0.1)|.
ModelGraph materialize_weights(const ModelGraph& graph, std::uint64_t seed);
/// Drops every weight payload (structure-only analyses never read them).
ModelGraph strip_weights(const ModelGraph& graph);

/// Hash of names, connectivity and dimensions (weights excluded).
std::uint64_t structure_hash(const ModelGraph& graph);
std::string hex64(std::uint64_t value);

// Model document.
class DocumentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ModelGraph& graph);
ModelGraph graph_from_json(const nlohmann::json& doc);
std::string serialize(const ModelGraph& graph);
/// Throws DocumentError naming the offending node / field.
ModelGraph deserialize(std::string_view text);

ModelGraph load_model(const std::string& path);
void save_model(const ModelGraph& graph, const std::string& path);

/// Incremental construction with declared dimensions filled from tracked shapes.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string name) { graph_.name = std::move(name); }

  NodeId input(int c, int h, int w);
  NodeId conv(NodeId src, int out_channels, int kernel = 3, int stride = 1, int groups = 1);
  NodeId depthwise(NodeId src, int kernel = 3, int stride = 1);
  NodeId fc(NodeId src, int out_features);
  NodeId relu(NodeId src);
  NodeId batchnorm(NodeId src);
  NodeId maxpool(NodeId src, int kernel, int stride);
  NodeId avgpool(NodeId src, int kernel, int stride);
  NodeId add(std::vector<NodeId> srcs);
  NodeId concat(std::vector<NodeId> srcs);
  NodeId slice(NodeId src, int offset, int width);
  /// Attaches the Output node and returns the finished graph.
  ModelGraph finish(NodeId src);

  Shape shape(NodeId id) const;

 private:
  NodeId push(LayerSpec spec);
  LayerSpec from_input(LayerKind kind, NodeId src) const;

  ModelGraph graph_;
  std::map<NodeId, Shape> shapes_;
};

}  // namespace aliasforge
