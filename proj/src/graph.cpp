#include "aliasforge/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "aliasforge/rng.hpp"

namespace aliasforge {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 11> kKindNames{{
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::FullyConnected, "FullyConnected"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::MaxPool2D, "MaxPool2D"},
    {LayerKind::AvgPool2D, "AvgPool2D"},
    {LayerKind::Add, "Add"},
    {LayerKind::Concat, "Concat"},
    {LayerKind::Slice, "Slice"},
    {LayerKind::Input, "Input"},
    {LayerKind::Output, "Output"},
}};

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  return std::nullopt;
}

bool emits_kernel(LayerKind kind, const SequenceOptions& opts) {
  switch (kind) {
    case LayerKind::Conv2D:
    case LayerKind::FullyConnected:
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
    case LayerKind::Add:
    case LayerKind::Concat:
      return true;
    case LayerKind::ReLU:
    case LayerKind::BatchNorm:
      return opts.include_activations;
    default:
      return false;
  }
}

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.c) + "," + std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

bool LayerSpec::takes_weights() const {
  return kind == LayerKind::Conv2D || kind == LayerKind::FullyConnected ||
         kind == LayerKind::BatchNorm;
}

std::vector<int> LayerSpec::expected_weight_shape() const {
  switch (kind) {
    case LayerKind::Conv2D:
      return {k1, k2, groups > 0 ? c / groups : c, j};
    case LayerKind::FullyConnected:
      return {c, j};
    case LayerKind::BatchNorm:
      return {4, c};
    default:
      return {};
  }
}

std::size_t LayerSpec::expected_weight_count() const {
  const auto shape = expected_weight_shape();
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(std::max(d, 0));
  return n;
}

const LayerSpec& ModelGraph::node(NodeId id) const {
  const auto it = nodes.find(id);
  if (it == nodes.end()) throw GraphError("unknown node id " + std::to_string(id));
  return it->second;
}

LayerSpec& ModelGraph::node(NodeId id) {
  const auto it = nodes.find(id);
  if (it == nodes.end()) throw GraphError("unknown node id " + std::to_string(id));
  return it->second;
}

std::vector<NodeId> ModelGraph::consumers(NodeId id) const {
  std::vector<NodeId> out;
  for (const auto& [nid, n] : nodes)
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) out.push_back(nid);
  return out;
}

bool ModelGraph::shapes_annotated() const {
  return std::all_of(nodes.begin(), nodes.end(),
                     [](const auto& kv) { return kv.second.out.has_value(); });
}

bool ModelGraph::has_any_weights() const {
  return std::any_of(nodes.begin(), nodes.end(),
                     [](const auto& kv) { return kv.second.weights.has_value(); });
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Structure: return "structure";
    case ViolationKind::Cycle: return "cycle";
    case ViolationKind::DanglingInput: return "dangling-input";
    case ViolationKind::Unreachable: return "unreachable";
    case ViolationKind::ShapeMismatch: return "shape-mismatch";
    case ViolationKind::WeightMismatch: return "weight-dimension";
    case ViolationKind::BadParameter: return "bad-parameter";
  }
  return "?";
}

bool ValidationReport::has(ViolationKind kind, std::optional<NodeId> node) const {
  return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) {
    return v.kind == kind && (!node || v.node == *node);
  });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (const auto& v : violations)
    os << "node " << v.node << ": " << to_string(v.kind) << ": " << v.message << '\n';
  return os.str();
}

std::optional<Shape> node_output_shape(const LayerSpec& n, const std::vector<Shape>& in,
                                       std::string* reason) {
  auto fail = [&](std::string msg) -> std::optional<Shape> {
    if (reason) *reason = std::move(msg);
    return std::nullopt;
  };
  auto expect_declared = [&](const Shape& s) -> bool {
    return n.c == s.c && n.in_h == s.h && n.in_w == s.w;
  };
  const std::string declared = "declared input " + to_string(n.input_shape());

  switch (n.kind) {
    case LayerKind::Input:
      if (n.c <= 0 || n.in_h <= 0 || n.in_w <= 0) return fail("input dims must be positive");
      return Shape{n.c, n.in_h, n.in_w};
    case LayerKind::Output:
    case LayerKind::ReLU:
    case LayerKind::BatchNorm:
      if (!expect_declared(in[0])) return fail(declared + " != actual " + to_string(in[0]));
      return in[0];
    case LayerKind::Conv2D: {
      if (!expect_declared(in[0])) return fail(declared + " != actual " + to_string(in[0]));
      if (n.k1 <= 0 || n.k2 <= 0 || n.stride <= 0 || n.j <= 0 || n.groups <= 0)
        return fail("kernel, stride, groups and output channels must be positive");
      if (n.c % n.groups != 0 || n.j % n.groups != 0)
        return fail("channels not divisible by groups");
      return Shape{n.j, ceil_div(in[0].h, n.stride), ceil_div(in[0].w, n.stride)};
    }
    case LayerKind::FullyConnected:
      if (n.in_h != in[0].h || n.in_w != in[0].w || n.c != in[0].elements())
        return fail("FC expects flattened input of " + std::to_string(in[0].elements()) +
                    " values, declared c=" + std::to_string(n.c));
      if (n.j <= 0) return fail("FC output features must be positive");
      return Shape{n.j, 1, 1};
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
      if (!expect_declared(in[0])) return fail(declared + " != actual " + to_string(in[0]));
      if (n.k1 <= 0 || n.k2 <= 0 || n.stride <= 0) return fail("pool window must be positive");
      if (n.k1 > in[0].h || n.k2 > in[0].w) return fail("pool window larger than input");
      return Shape{in[0].c, (in[0].h - n.k1) / n.stride + 1, (in[0].w - n.k2) / n.stride + 1};
    case LayerKind::Add: {
      for (const auto& s : in)
        if (s != in[0])
          return fail("add operands differ: " + to_string(in[0]) + " vs " + to_string(s));
      if (!expect_declared(in[0])) return fail(declared + " != actual " + to_string(in[0]));
      return in[0];
    }
    case LayerKind::Concat: {
      int total = 0;
      for (const auto& s : in) {
        if (s.h != in[0].h || s.w != in[0].w)
          return fail("concat operands differ spatially: " + to_string(in[0]) + " vs " +
                      to_string(s));
        total += s.c;
      }
      if (n.c != total || n.in_h != in[0].h || n.in_w != in[0].w)
        return fail(declared + " != concatenated (" + std::to_string(total) + "," +
                    std::to_string(in[0].h) + "," + std::to_string(in[0].w) + ")");
      return Shape{total, in[0].h, in[0].w};
    }
    case LayerKind::Slice:
      if (!expect_declared(in[0])) return fail(declared + " != actual " + to_string(in[0]));
      if (n.offset < 0 || n.j <= 0 || n.offset + n.j > in[0].c)
        return fail("slice [" + std::to_string(n.offset) + "," + std::to_string(n.offset + n.j) +
                    ") outside " + std::to_string(in[0].c) + " channels");
      return Shape{n.j, in[0].h, in[0].w};
  }
  return fail("unknown kind");
}

namespace {

std::size_t expected_arity_min(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return 0;
    case LayerKind::Add:
    case LayerKind::Concat: return 2;
    default: return 1;
  }
}

std::size_t expected_arity_max(LayerKind kind) {
  switch (kind) {
    case LayerKind::Input: return 0;
    case LayerKind::Add:
    case LayerKind::Concat: return SIZE_MAX;
    default: return 1;
  }
}

// Kahn's algorithm over the nodes whose inputs all exist; returns the order
// and leaves unordered (cyclic) nodes out.
std::vector<NodeId> kahn(const ModelGraph& g) {
  std::map<NodeId, std::size_t> indegree;
  std::map<NodeId, std::vector<NodeId>> succ;
  for (const auto& [id, n] : g.nodes) {
    indegree.try_emplace(id, 0);
    for (NodeId src : n.inputs) {
      if (!g.contains(src)) continue;
      ++indegree[id];
      succ[src].push_back(id);
    }
  }
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (const auto& [id, d] : indegree)
    if (d == 0) ready.push(id);
  std::vector<NodeId> order;
  order.reserve(g.nodes.size());
  while (!ready.empty()) {
    const NodeId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (NodeId s : succ[id])
      if (--indegree[s] == 0) ready.push(s);
  }
  return order;
}

}  // namespace

std::vector<NodeId> topological_order(const ModelGraph& graph) {
  auto order = kahn(graph);
  if (order.size() != graph.nodes.size()) throw GraphError("graph contains a cycle");
  return order;
}

ValidationReport validate(const ModelGraph& g) {
  ValidationReport report;
  auto add = [&](NodeId id, ViolationKind kind, std::string msg) {
    report.violations.push_back({id, kind, std::move(msg)});
  };

  int n_inputs = 0;
  int n_outputs = 0;
  for (const auto& [id, n] : g.nodes) {
    if (n.id != id) add(id, ViolationKind::Structure, "node key/id mismatch");
    n_inputs += n.kind == LayerKind::Input;
    n_outputs += n.kind == LayerKind::Output;
  }
  if (n_inputs != 1) add(g.input_id, ViolationKind::Structure, "expected exactly one Input node");
  if (n_outputs != 1) add(g.output_id, ViolationKind::Structure, "expected exactly one Output node");
  if (!g.contains(g.input_id) || g.node(g.input_id).kind != LayerKind::Input)
    add(g.input_id, ViolationKind::Structure, "input_id does not name an Input node");
  if (!g.contains(g.output_id) || g.node(g.output_id).kind != LayerKind::Output)
    add(g.output_id, ViolationKind::Structure, "output_id does not name an Output node");

  bool dangling = false;
  for (const auto& [id, n] : g.nodes) {
    for (NodeId src : n.inputs) {
      if (!g.contains(src)) {
        add(id, ViolationKind::DanglingInput, "input " + std::to_string(src) + " does not exist");
        dangling = true;
      }
    }
    if (n.inputs.size() < expected_arity_min(n.kind) || n.inputs.size() > expected_arity_max(n.kind))
      add(id, ViolationKind::Structure,
          std::string(to_string(n.kind)) + " has " + std::to_string(n.inputs.size()) + " inputs");
    if (n.takes_weights() && n.weights) {
      const auto shape = n.expected_weight_shape();
      if (n.weights->data.size() != n.expected_weight_count() || n.weights->shape != shape)
        add(id, ViolationKind::WeightMismatch,
            "expected " + std::to_string(n.expected_weight_count()) + " weight values, found " +
                std::to_string(n.weights->data.size()));
    } else if (!n.takes_weights() && n.weights) {
      add(id, ViolationKind::WeightMismatch,
          std::string(to_string(n.kind)) + " does not take weights");
    }
  }

  const auto order = kahn(g);
  const bool cyclic = order.size() != g.nodes.size();
  if (cyclic) {
    std::set<NodeId> ordered(order.begin(), order.end());
    for (const auto& [id, n] : g.nodes)
      if (!ordered.contains(id)) add(id, ViolationKind::Cycle, "node lies on or behind a cycle");
  }

  // Reachability from Input / co-reachability to Output.
  if (g.contains(g.input_id) && g.contains(g.output_id)) {
    std::set<NodeId> fwd{g.input_id};
    std::vector<NodeId> stack{g.input_id};
    std::map<NodeId, std::vector<NodeId>> succ;
    for (const auto& [id, n] : g.nodes)
      for (NodeId src : n.inputs) succ[src].push_back(id);
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      for (NodeId s : succ[id])
        if (fwd.insert(s).second) stack.push_back(s);
    }
    std::set<NodeId> back{g.output_id};
    stack = {g.output_id};
    while (!stack.empty()) {
      const NodeId id = stack.back();
      stack.pop_back();
      for (NodeId src : g.node(id).inputs)
        if (g.contains(src) && back.insert(src).second) stack.push_back(src);
    }
    for (const auto& [id, n] : g.nodes) {
      if (!fwd.contains(id)) add(id, ViolationKind::Unreachable, "not reachable from Input");
      else if (!back.contains(id)) add(id, ViolationKind::Unreachable, "does not reach Output");
    }
  }

  if (cyclic || dangling) return report;

  std::map<NodeId, Shape> shapes;
  for (NodeId id : order) {
    const auto& n = g.node(id);
    std::vector<Shape> in;
    bool known = true;
    for (NodeId src : n.inputs) {
      const auto it = shapes.find(src);
      if (it == shapes.end()) {
        known = false;
        break;
      }
      in.push_back(it->second);
    }
    if (!known || in.size() < expected_arity_min(n.kind) ||
        in.size() > expected_arity_max(n.kind))
      continue;
    std::string reason;
    if (auto s = node_output_shape(n, in, &reason)) {
      shapes[id] = *s;
      if (n.kind == LayerKind::Conv2D || n.kind == LayerKind::BatchNorm ||
          n.kind == LayerKind::FullyConnected) {
        if (n.kind == LayerKind::BatchNorm && n.j != n.c)
          add(id, ViolationKind::BadParameter, "BatchNorm must declare j == c");
      } else if (n.kind != LayerKind::Input && n.kind != LayerKind::Slice && n.j != s->c) {
        add(id, ViolationKind::BadParameter,
            "declared j=" + std::to_string(n.j) + " but output has " + std::to_string(s->c) +
                " channels");
      }
    } else {
      const auto kind = reason.find("positive") != std::string::npos ||
                                reason.find("divisible") != std::string::npos
                            ? ViolationKind::BadParameter
                            : ViolationKind::ShapeMismatch;
      add(id, kind, reason);
    }
  }
  return report;
}

ModelGraph infer_shapes(const ModelGraph& graph) {
  const auto report = validate(graph);
  if (!report.ok()) throw GraphError("infer_shapes on invalid graph:\n" + report.summary());
  ModelGraph out = graph;
  for (NodeId id : topological_order(out)) {
    auto& n = out.node(id);
    std::vector<Shape> in;
    for (NodeId src : n.inputs) in.push_back(*out.node(src).out);
    n.out = node_output_shape(n, in);
  }
  return out;
}

std::vector<NodeId> kernel_nodes(const ModelGraph& graph, const SequenceOptions& opts) {
  std::vector<NodeId> ids;
  for (NodeId id : topological_order(graph))
    if (emits_kernel(graph.node(id).kind, opts)) ids.push_back(id);
  return ids;
}

LayerSequence to_sequence(const ModelGraph& graph, const SequenceOptions& opts) {
  LayerSequence seq;
  for (NodeId id : kernel_nodes(graph, opts)) seq.push_back(graph.node(id).kind);
  return seq;
}

std::string to_string(const LayerSequence& seq) {
  std::string out = "[";
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ", ";
    out += to_string(seq[i]);
  }
  return out + "]";
}

ModelGraph materialize_weights(const ModelGraph& graph, std::uint64_t seed) {
  ModelGraph out = graph;
  for (auto& [id, n] : out.nodes) {
    if (!n.takes_weights() || n.weights) continue;
    Rng rng(derive_seed(seed, "weights", static_cast<std::uint64_t>(id)));
    Weights w{n.expected_weight_shape(), std::vector<float>(n.expected_weight_count())};
    if (n.kind == LayerKind::BatchNorm) {
      const auto ch = static_cast<std::size_t>(n.c);
      for (std::size_t i = 0; i < ch; ++i) {
        w.data[i] = static_cast<float>(1.0 + 0.1 * rng.normal());
        w.data[ch + i] = static_cast<float>(0.1 * rng.normal());
        w.data[2 * ch + i] = static_cast<float>(0.1 * rng.normal());
        w.data[3 * ch + i] = static_cast<float>(1.0 + std::abs(0.1 * rng.normal()));
      }
    } else {
      for (auto& v : w.data) v = static_cast<float>(0.1 * rng.normal());
    }
    n.weights = std::move(w);
  }
  return out;
}

ModelGraph strip_weights(const ModelGraph& graph) {
  ModelGraph out = graph;
  for (auto& [id, n] : out.nodes) n.weights.reset();
  return out;
}

std::uint64_t structure_hash(const ModelGraph& graph) {
  std::ostringstream os;
  os << graph.name << '|' << graph.input_id << '|' << graph.output_id;
  for (const auto& [id, n] : graph.nodes) {
    os << ';' << id << ':' << to_string(n.kind) << ':' << n.k1 << ',' << n.k2 << ',' << n.c << ','
       << n.j << ',' << n.stride << ',' << n.in_h << ',' << n.in_w << ',' << n.groups << ','
       << n.offset << '<';
    for (NodeId src : n.inputs) os << src << ',';
  }
  return fnv1a(os.str());
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

// ---------------------------------------------------------------------------
// Model document

nlohmann::json to_json(const ModelGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : graph.nodes) {
    nlohmann::json node = {
        {"id", n.id},       {"kind", to_string(n.kind)}, {"k1", n.k1},
        {"k2", n.k2},       {"c", n.c},                  {"j", n.j},
        {"stride", n.stride}, {"in_h", n.in_h},          {"in_w", n.in_w},
        {"inputs", n.inputs},
    };
    if (n.groups != 1) node["groups"] = n.groups;
    if (n.offset != 0) node["offset"] = n.offset;
    if (n.weights) node["weights"] = {{"shape", n.weights->shape}, {"data", n.weights->data}};
    nodes.push_back(std::move(node));
  }
  return {{"name", graph.name},
          {"input_id", graph.input_id},
          {"output_id", graph.output_id},
          {"nodes", std::move(nodes)}};
}

namespace {

template <typename T>
T field(const nlohmann::json& obj, const char* key, const std::string& where, T fallback,
        bool required = false) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw DocumentError(where + ": missing \"" + key + "\"");
    return fallback;
  }
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw DocumentError(where + ": field \"" + key + "\" has wrong type (" + e.what() + ")");
  }
}

}  // namespace

ModelGraph graph_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw DocumentError("document root must be an object");
  ModelGraph g;
  g.name = field<std::string>(doc, "name", "document", "");
  g.input_id = field<NodeId>(doc, "input_id", "document", 0, true);
  g.output_id = field<NodeId>(doc, "output_id", "document", 0, true);
  const auto nodes = doc.find("nodes");
  if (nodes == doc.end() || !nodes->is_array()) throw DocumentError("document: missing \"nodes\" array");
  for (std::size_t i = 0; i < nodes->size(); ++i) {
    const auto& jn = (*nodes)[i];
    const std::string at = "nodes[" + std::to_string(i) + "]";
    if (!jn.is_object()) throw DocumentError(at + ": node must be an object");
    LayerSpec n;
    n.id = field<NodeId>(jn, "id", at, 0, true);
    const std::string where = "node " + std::to_string(n.id);
    const auto kind_name = field<std::string>(jn, "kind", where, "", true);
    const auto kind = parse_layer_kind(kind_name);
    if (!kind) throw DocumentError(where + ": unknown kind \"" + kind_name + "\"");
    n.kind = *kind;
    n.k1 = field<int>(jn, "k1", where, 1);
    n.k2 = field<int>(jn, "k2", where, 1);
    n.c = field<int>(jn, "c", where, 0);
    n.j = field<int>(jn, "j", where, 0);
    n.stride = field<int>(jn, "stride", where, 1);
    n.in_h = field<int>(jn, "in_h", where, 0);
    n.in_w = field<int>(jn, "in_w", where, 0);
    n.groups = field<int>(jn, "groups", where, 1);
    n.offset = field<int>(jn, "offset", where, 0);
    n.inputs = field<std::vector<NodeId>>(jn, "inputs", where, {});
    if (const auto w = jn.find("weights"); w != jn.end() && !w->is_null()) {
      Weights weights;
      weights.shape = field<std::vector<int>>(*w, "shape", where + " weights", {}, true);
      weights.data = field<std::vector<float>>(*w, "data", where + " weights", {}, true);
      n.weights = std::move(weights);
    }
    if (!g.nodes.emplace(n.id, std::move(n)).second)
      throw DocumentError(where + ": duplicate node id");
  }
  return g;
}

std::string serialize(const ModelGraph& graph) { return to_json(graph).dump() + "\n"; }

ModelGraph deserialize(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DocumentError(std::string("malformed document at byte ") + std::to_string(e.byte) +
                        ": " + e.what());
  }
  return graph_from_json(doc);
}

ModelGraph load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DocumentError(path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize(buf.str());
  } catch (const DocumentError& e) {
    throw DocumentError(path + ": " + e.what());
  }
}

void save_model(const ModelGraph& graph, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DocumentError(path + ": cannot write");
  out << serialize(graph);
  if (!out) throw DocumentError(path + ": write failed");
}

// ---------------------------------------------------------------------------
// GraphBuilder

NodeId GraphBuilder::push(LayerSpec spec) {
  spec.id = graph_.next_id();
  std::vector<Shape> in;
  for (NodeId src : spec.inputs) in.push_back(shape(src));
  std::string reason;
  const auto out = node_output_shape(spec, in, &reason);
  if (!out) throw GraphError("GraphBuilder: " + std::string(to_string(spec.kind)) + ": " + reason);
  if (spec.kind != LayerKind::Conv2D && spec.kind != LayerKind::FullyConnected &&
      spec.kind != LayerKind::Slice && spec.kind != LayerKind::Input)
    spec.j = out->c;
  shapes_[spec.id] = *out;
  const NodeId id = spec.id;
  graph_.nodes.emplace(id, std::move(spec));
  return id;
}

LayerSpec GraphBuilder::from_input(LayerKind kind, NodeId src) const {
  const Shape s = shape(src);
  LayerSpec n;
  n.kind = kind;
  n.c = s.c;
  n.j = s.c;
  n.in_h = s.h;
  n.in_w = s.w;
  n.inputs = {src};
  return n;
}

Shape GraphBuilder::shape(NodeId id) const {
  const auto it = shapes_.find(id);
  if (it == shapes_.end()) throw GraphError("GraphBuilder: unknown node " + std::to_string(id));
  return it->second;
}

NodeId GraphBuilder::input(int c, int h, int w) {
  LayerSpec n;
  n.kind = LayerKind::Input;
  n.c = c;
  n.j = c;
  n.in_h = h;
  n.in_w = w;
  const NodeId id = push(std::move(n));
  graph_.input_id = id;
  return id;
}

NodeId GraphBuilder::conv(NodeId src, int out_channels, int kernel, int stride, int groups) {
  auto n = from_input(LayerKind::Conv2D, src);
  n.j = out_channels;
  n.k1 = n.k2 = kernel;
  n.stride = stride;
  n.groups = groups;
  return push(std::move(n));
}

NodeId GraphBuilder::depthwise(NodeId src, int kernel, int stride) {
  const int ch = shape(src).c;
  return conv(src, ch, kernel, stride, ch);
}

NodeId GraphBuilder::fc(NodeId src, int out_features) {
  auto n = from_input(LayerKind::FullyConnected, src);
  n.c = static_cast<int>(shape(src).elements());
  n.j = out_features;
  return push(std::move(n));
}

NodeId GraphBuilder::relu(NodeId src) { return push(from_input(LayerKind::ReLU, src)); }
NodeId GraphBuilder::batchnorm(NodeId src) { return push(from_input(LayerKind::BatchNorm, src)); }

NodeId GraphBuilder::maxpool(NodeId src, int kernel, int stride) {
  auto n = from_input(LayerKind::MaxPool2D, src);
  n.k1 = n.k2 = kernel;
  n.stride = stride;
  return push(std::move(n));
}

NodeId GraphBuilder::avgpool(NodeId src, int kernel, int stride) {
  auto n = from_input(LayerKind::AvgPool2D, src);
  n.k1 = n.k2 = kernel;
  n.stride = stride;
  return push(std::move(n));
}

NodeId GraphBuilder::add(std::vector<NodeId> srcs) {
  auto n = from_input(LayerKind::Add, srcs.at(0));
  n.inputs = std::move(srcs);
  return push(std::move(n));
}

NodeId GraphBuilder::concat(std::vector<NodeId> srcs) {
  auto n = from_input(LayerKind::Concat, srcs.at(0));
  n.c = 0;
  for (NodeId s : srcs) n.c += shape(s).c;
  n.inputs = std::move(srcs);
  return push(std::move(n));
}

NodeId GraphBuilder::slice(NodeId src, int offset, int width) {
  auto n = from_input(LayerKind::Slice, src);
  n.offset = offset;
  n.j = width;
  return push(std::move(n));
}

ModelGraph GraphBuilder::finish(NodeId src) {
  graph_.output_id = push(from_input(LayerKind::Output, src));
  ModelGraph out = std::move(graph_);
  graph_ = ModelGraph{};
  shapes_.clear();
  return out;
}

}  // namespace aliasforge
