#include "aliasforge/transforms.hpp"

#include <algorithm>
#include <map>

namespace aliasforge {

namespace {

using ShapeMap = std::map<NodeId, Shape>;

ShapeMap compute_shapes(const ModelGraph& g) {
  ShapeMap shapes;
  for (NodeId id : topological_order(g)) {
    const auto& n = g.node(id);
    std::vector<Shape> in;
    for (NodeId src : n.inputs) in.push_back(shapes.at(src));
    std::string reason;
    auto s = node_output_shape(n, in, &reason);
    if (!s) throw TransformError("node " + std::to_string(id) + ": " + reason);
    shapes[id] = *s;
  }
  return shapes;
}

// Rewrite workspace: the graph under construction plus what the rewrites need
// to know about it.
struct Rewriter {
  ModelGraph g;
  ShapeMap shapes;
  bool numeric;

  explicit Rewriter(const ModelGraph& graph)
      : g(graph), shapes(compute_shapes(graph)), numeric(graph.has_any_weights()) {
    for (auto& [id, n] : g.nodes) n.out.reset();
  }

  void refresh() { shapes = compute_shapes(g); }

  NodeId insert(LayerSpec spec) {
    spec.id = g.next_id();
    const NodeId id = spec.id;
    g.nodes.emplace(id, std::move(spec));
    return id;
  }

  // Every consumer of `from` except those in `keep` now reads `to`.
  void rewire(NodeId from, NodeId to, std::initializer_list<NodeId> keep) {
    for (auto& [id, n] : g.nodes) {
      if (std::find(keep.begin(), keep.end(), id) != keep.end()) continue;
      std::replace(n.inputs.begin(), n.inputs.end(), from, to);
    }
  }

  LayerSpec conv_reading(NodeId src, int kernel) const {
    const Shape s = shapes.at(src);
    LayerSpec n;
    n.kind = LayerKind::Conv2D;
    n.k1 = n.k2 = kernel;
    n.c = n.j = s.c;
    n.in_h = s.h;
    n.in_w = s.w;
    n.inputs = {src};
    return n;
  }

  // Turns node `id` into a weightless join (Add/Concat) over `parts`.
  void become_join(NodeId id, LayerKind kind, std::vector<NodeId> parts, Shape out) {
    auto& n = g.node(id);
    n.kind = kind;
    n.k1 = n.k2 = n.stride = n.groups = 1;
    n.offset = 0;
    n.c = n.j = out.c;
    n.in_h = out.h;
    n.in_w = out.w;
    n.inputs = std::move(parts);
    n.weights.reset();
  }

  void branch_output(NodeId id, std::optional<int> split) {
    const LayerSpec orig = g.node(id);
    const bool is_conv = orig.kind == LayerKind::Conv2D && orig.groups == 1;
    if (!is_conv && orig.kind != LayerKind::FullyConnected)
      throw TransformError("branch_output: node " + std::to_string(id) + " is " +
                           std::string(to_string(orig.kind)) + ", needs Conv2D or FullyConnected");
    if (orig.j < 2) throw TransformError("branch_output: node " + std::to_string(id) + " has j < 2");
    const int m = split.value_or(orig.j / 2);
    if (m < 1 || m >= orig.j)
      throw TransformError("branch_output: split " + std::to_string(m) + " outside [1, " +
                           std::to_string(orig.j) + ")");

    LayerSpec lo = orig;
    LayerSpec hi = orig;
    lo.j = m;
    hi.j = orig.j - m;
    if (orig.weights) {
      const auto& src = orig.weights->data;
      const std::size_t rows = src.size() / static_cast<std::size_t>(orig.j);
      lo.weights = Weights{lo.expected_weight_shape(), {}};
      hi.weights = Weights{hi.expected_weight_shape(), {}};
      lo.weights->data.reserve(rows * m);
      hi.weights->data.reserve(rows * hi.j);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = src.begin() + static_cast<std::ptrdiff_t>(r * orig.j);
        lo.weights->data.insert(lo.weights->data.end(), row, row + m);
        hi.weights->data.insert(hi.weights->data.end(), row + m, row + orig.j);
      }
    }
    const NodeId lo_id = insert(std::move(lo));
    const NodeId hi_id = insert(std::move(hi));
    become_join(id, LayerKind::Concat, {lo_id, hi_id}, shapes.at(id));
    refresh();
  }

  // Returns the ids of the two sibling convs.
  std::pair<NodeId, NodeId> branch_input(NodeId id, std::optional<int> split) {
    const LayerSpec orig = g.node(id);
    if (orig.kind != LayerKind::Conv2D || orig.groups != 1)
      throw TransformError("branch_input: node " + std::to_string(id) + " is " +
                           std::string(to_string(orig.kind)) + ", needs a dense Conv2D");
    if (orig.c < 2) throw TransformError("branch_input: node " + std::to_string(id) + " has c < 2");
    if (orig.inputs.size() != 1)
      throw TransformError("branch_input: node " + std::to_string(id) + " needs one predecessor");
    const int m = split.value_or(orig.c / 2);
    if (m < 1 || m >= orig.c)
      throw TransformError("branch_input: split " + std::to_string(m) + " outside [1, " +
                           std::to_string(orig.c) + ")");

    const NodeId pred = orig.inputs.front();
    auto make_slice = [&](int offset, int width) {
      LayerSpec s;
      s.kind = LayerKind::Slice;
      s.c = orig.c;
      s.in_h = orig.in_h;
      s.in_w = orig.in_w;
      s.offset = offset;
      s.j = width;
      s.inputs = {pred};
      return insert(std::move(s));
    };
    const NodeId slice_lo = make_slice(0, m);
    const NodeId slice_hi = make_slice(m, orig.c - m);

    LayerSpec lo = orig;
    LayerSpec hi = orig;
    lo.c = m;
    hi.c = orig.c - m;
    lo.inputs = {slice_lo};
    hi.inputs = {slice_hi};
    if (orig.weights) {
      const auto& src = orig.weights->data;
      const std::size_t taps = static_cast<std::size_t>(orig.k1) * orig.k2;
      const std::size_t stride = static_cast<std::size_t>(orig.c) * orig.j;
      const std::size_t lo_len = static_cast<std::size_t>(m) * orig.j;
      lo.weights = Weights{lo.expected_weight_shape(), {}};
      hi.weights = Weights{hi.expected_weight_shape(), {}};
      for (std::size_t t = 0; t < taps; ++t) {
        const auto base = src.begin() + static_cast<std::ptrdiff_t>(t * stride);
        lo.weights->data.insert(lo.weights->data.end(), base, base + static_cast<std::ptrdiff_t>(lo_len));
        hi.weights->data.insert(hi.weights->data.end(), base + static_cast<std::ptrdiff_t>(lo_len),
                                base + static_cast<std::ptrdiff_t>(stride));
      }
    }
    const NodeId lo_id = insert(std::move(lo));
    const NodeId hi_id = insert(std::move(hi));
    become_join(id, LayerKind::Add, {lo_id, hi_id}, shapes.at(id));
    refresh();
    return {lo_id, hi_id};
  }

  // Returns the Add that now carries the layer's output.
  NodeId skip(NodeId id) {
    const auto& n = g.node(id);
    if (n.kind == LayerKind::Output || n.kind == LayerKind::Input || n.kind == LayerKind::Slice)
      throw TransformError("skip: cannot attach to " + std::string(to_string(n.kind)) + " node " +
                           std::to_string(id));
    LayerSpec zero = conv_reading(id, 3);
    if (numeric) zero.weights = Weights{zero.expected_weight_shape(),
                                        std::vector<float>(zero.expected_weight_count(), 0.0f)};
    const NodeId zero_id = insert(std::move(zero));
    const Shape s = shapes.at(id);
    LayerSpec sum;
    sum.kind = LayerKind::Add;
    sum.c = sum.j = s.c;
    sum.in_h = s.h;
    sum.in_w = s.w;
    sum.inputs = {id, zero_id};
    const NodeId sum_id = insert(std::move(sum));
    rewire(id, sum_id, {zero_id, sum_id});
    refresh();
    return sum_id;
  }

  NodeId deepen_point(NodeId id) const {
    const auto& n = g.node(id);
    switch (n.kind) {
      case LayerKind::Input:
      case LayerKind::Output:
      case LayerKind::Slice:
        throw TransformError("deepen: cannot insert after " + std::string(to_string(n.kind)) +
                             " node " + std::to_string(id));
      default:
        break;
    }
    NodeId cur = id;
    for (;;) {
      const auto next = g.consumers(cur);
      if (next.size() != 1) break;
      const auto kind = g.node(next.front()).kind;
      if (kind == LayerKind::ReLU) return next.front();
      if (kind != LayerKind::BatchNorm) break;
      cur = next.front();
    }
    if (n.kind == LayerKind::MaxPool2D)
      throw TransformError("deepen: node " + std::to_string(id) +
                           " ends in a non-ReLU nonlinearity (MaxPool2D)");
    return id;
  }

  void deepen(NodeId id, int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
      throw TransformError("deepen: kernel " + std::to_string(kernel) + " must be odd and positive");
    const NodeId point = deepen_point(id);
    LayerSpec conv = conv_reading(point, kernel);
    if (numeric) conv.weights = identity_kernel(kernel, conv.c);
    const NodeId conv_id = insert(std::move(conv));
    rewire(point, conv_id, {conv_id});
    refresh();
  }
};

ModelGraph finished(Rewriter& rw) { return infer_shapes(rw.g); }

void require_valid(const ModelGraph& g, std::string_view op) {
  const auto report = validate(g);
  if (!report.ok())
    throw TransformError(std::string(op) + " on invalid graph:\n" + report.summary());
}

}  // namespace

ModelGraph branch_output(const ModelGraph& graph, NodeId layer, std::optional<int> split) {
  require_valid(graph, "branch_output");
  Rewriter rw(graph);
  rw.branch_output(layer, split);
  return finished(rw);
}

ModelGraph branch_input(const ModelGraph& graph, NodeId layer, std::optional<int> split) {
  require_valid(graph, "branch_input");
  Rewriter rw(graph);
  rw.branch_input(layer, split);
  return finished(rw);
}

ModelGraph skip(const ModelGraph& graph, NodeId layer) {
  require_valid(graph, "skip");
  Rewriter rw(graph);
  rw.skip(layer);
  return finished(rw);
}

ModelGraph deepen(const ModelGraph& graph, NodeId layer, int kernel) {
  require_valid(graph, "deepen");
  Rewriter rw(graph);
  rw.deepen(layer, kernel);
  return finished(rw);
}

Weights identity_kernel(int kernel, int channels) {
  Weights w{{kernel, kernel, channels, channels},
            std::vector<float>(static_cast<std::size_t>(kernel) * kernel * channels * channels, 0.0f)};
  const std::size_t center = static_cast<std::size_t>(kernel / 2) * kernel + kernel / 2;
  const std::size_t per_tap = static_cast<std::size_t>(channels) * channels;
  for (int ch = 0; ch < channels; ++ch)
    w.data[center * per_tap + static_cast<std::size_t>(ch) * channels + ch] = 1.0f;
  return w;
}

// ---------------------------------------------------------------------------

std::string_view to_string(KnobOp op) {
  switch (op) {
    case KnobOp::BranchIn: return "BranchIn";
    case KnobOp::BranchOut: return "BranchOut";
    case KnobOp::Deepen: return "Deepen";
    case KnobOp::Skip: return "Skip";
  }
  return "?";
}

std::optional<KnobOp> parse_knob_op(std::string_view name) {
  for (KnobOp op : kKnobOps)
    if (to_string(op) == name) return op;
  return std::nullopt;
}

int KnobSlot::enabled_count() const {
  return static_cast<int>(std::count(enabled.begin(), enabled.end(), true));
}

int KnobSlot::applicable_count() const {
  return static_cast<int>(std::count(applicable.begin(), applicable.end(), true));
}

bool Genome::compatible_with(const Genome& other) const {
  if (base_hash != other.base_hash || slots.size() != other.slots.size()) return false;
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (slots[i].layer_id != other.slots[i].layer_id) return false;
  return true;
}

int Genome::enabled_count() const {
  int n = 0;
  for (const auto& s : slots) n += s.enabled_count();
  return n;
}

namespace {

KnobSlot slot_for(const LayerSpec& n) {
  KnobSlot s;
  s.layer_id = n.id;
  auto allow = [&](KnobOp op) { s.applicable[static_cast<std::size_t>(op)] = true; };
  switch (n.kind) {
    case LayerKind::Conv2D:
      if (n.groups == 1) {
        if (n.c >= 2) allow(KnobOp::BranchIn);
        if (n.j >= 2) allow(KnobOp::BranchOut);
      }
      allow(KnobOp::Deepen);
      allow(KnobOp::Skip);
      break;
    case LayerKind::FullyConnected:
      if (n.j >= 2) allow(KnobOp::BranchOut);
      allow(KnobOp::Deepen);
      allow(KnobOp::Skip);
      break;
    case LayerKind::AvgPool2D:
      allow(KnobOp::Deepen);
      allow(KnobOp::Skip);
      break;
    case LayerKind::MaxPool2D:
      allow(KnobOp::Skip);
      break;
    default:  // Add / Concat joins carry no knobs
      break;
  }
  s.in_channels = n.c;
  s.out_channels = n.j;
  s.in_split = std::max(1, n.c / 2);
  s.out_split = std::max(1, n.j / 2);
  return s;
}

}  // namespace

Genome empty_genome(const ModelGraph& base) {
  Genome g;
  g.base_name = base.name;
  g.base_hash = structure_hash(base);
  for (NodeId id : kernel_nodes(base)) g.slots.push_back(slot_for(base.node(id)));
  return g;
}

Genome random_genome(const ModelGraph& base, std::uint64_t seed) {
  Genome g = empty_genome(base);
  Rng rng(seed);
  for (auto& slot : g.slots)
    for (KnobOp op : kKnobOps)
      if (slot.can(op)) slot.set(op, rng.bernoulli(0.5));
  return g;
}

ModelGraph apply_genome(const ModelGraph& base, const Genome& genome) {
  require_valid(base, "apply_genome");
  if (genome.base_hash != structure_hash(base))
    throw TransformError("apply_genome: genome was built for a different base graph (" +
                         genome.base_name + ")");
  Rewriter rw(base);
  for (std::size_t i = 0; i < genome.slots.size(); ++i) {
    const auto& slot = genome.slots[i];
    try {
      std::vector<NodeId> pieces{slot.layer_id};
      if (slot.uses(KnobOp::BranchIn)) {
        const auto [lo, hi] = rw.branch_input(slot.layer_id, slot.in_split);
        pieces = {lo, hi};
      }
      if (slot.uses(KnobOp::BranchOut))
        for (NodeId piece : pieces) {
          const int j = rw.g.node(piece).j;
          if (j >= 2) rw.branch_output(piece, std::clamp(slot.out_split, 1, j - 1));
        }
      if (slot.uses(KnobOp::Deepen)) rw.deepen(slot.layer_id, slot.deepen_kernel);
      if (slot.uses(KnobOp::Skip)) rw.skip(slot.layer_id);
    } catch (const std::exception& e) {
      throw TransformError("genome slot " + std::to_string(i) + " (layer " +
                           std::to_string(slot.layer_id) + "): " + e.what());
    }
  }
  return finished(rw);
}

nlohmann::json to_json(const Genome& genome) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : genome.slots) {
    nlohmann::json ops = nlohmann::json::array();
    for (KnobOp op : kKnobOps) {
      if (!s.uses(op)) continue;
      nlohmann::json params = nlohmann::json::object();
      if (op == KnobOp::BranchIn) params["split"] = s.in_split;
      if (op == KnobOp::BranchOut) params["split"] = s.out_split;
      if (op == KnobOp::Deepen) params["kernel"] = s.deepen_kernel;
      ops.push_back({{"op", to_string(op)}, {"params", params}});
    }
    slots.push_back({{"layer_id", s.layer_id}, {"ops", ops}});
  }
  return {{"base_model", {{"name", genome.base_name}, {"hash", hex64(genome.base_hash)}}},
          {"slots", slots}};
}

Genome genome_from_json(const nlohmann::json& doc, const ModelGraph& base) {
  Genome g = empty_genome(base);
  try {
    const auto& bm = doc.at("base_model");
    if (bm.at("hash").get<std::string>() != hex64(g.base_hash))
      throw DocumentError("genome base hash " + bm.at("hash").get<std::string>() +
                          " does not match model " + base.name + " (" + hex64(g.base_hash) + ")");
    const auto& slots = doc.at("slots");
    if (slots.size() != g.slots.size())
      throw DocumentError("genome has " + std::to_string(slots.size()) + " slots, model has " +
                          std::to_string(g.slots.size()));
    for (std::size_t i = 0; i < slots.size(); ++i) {
      auto& slot = g.slots[i];
      const std::string where = "slot " + std::to_string(i);
      if (slots[i].at("layer_id").get<NodeId>() != slot.layer_id)
        throw DocumentError(where + ": layer id does not match the model");
      for (const auto& jop : slots[i].at("ops")) {
        const auto name = jop.at("op").get<std::string>();
        const auto op = parse_knob_op(name);
        if (!op) throw DocumentError(where + ": unknown op \"" + name + "\"");
        if (!slot.can(*op)) throw DocumentError(where + ": " + name + " not applicable");
        slot.set(*op, true);
        const auto params = jop.value("params", nlohmann::json::object());
        if (*op == KnobOp::BranchIn) slot.in_split = params.value("split", slot.in_split);
        if (*op == KnobOp::BranchOut) slot.out_split = params.value("split", slot.out_split);
        if (*op == KnobOp::Deepen) slot.deepen_kernel = params.value("kernel", slot.deepen_kernel);
      }
      if (slot.uses(KnobOp::BranchIn) && (slot.in_split < 1 || slot.in_split >= slot.in_channels))
        throw DocumentError(where + ": BranchIn split " + std::to_string(slot.in_split) +
                            " outside [1, " + std::to_string(slot.in_channels) + ")");
      if (slot.uses(KnobOp::BranchOut) && (slot.out_split < 1 || slot.out_split >= slot.out_channels))
        throw DocumentError(where + ": BranchOut split " + std::to_string(slot.out_split) +
                            " outside [1, " + std::to_string(slot.out_channels) + ")");
      if (slot.uses(KnobOp::Deepen) &&
          std::find(kDeepenKernels.begin(), kDeepenKernels.end(), slot.deepen_kernel) == kDeepenKernels.end())
        throw DocumentError(where + ": Deepen kernel " + std::to_string(slot.deepen_kernel) +
                            " not in {1, 3, 5}");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DocumentError(std::string("malformed genome document: ") + e.what());
  }
  return g;
}

}  // namespace aliasforge
