#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aliasforge/graph.hpp"
#include "aliasforge/rng.hpp"

namespace aliasforge {

class TransformError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Function-preserving rewrites. Each returns a new, validated and
// shape-annotated graph; the input graph must validate.

/// Splits a Conv2D/FC over its output channels at `split` (default j/2): two
/// sibling operators on W[..., 0:split) and W[..., split:j), joined by a
/// Concat that takes over the layer's node id.
ModelGraph branch_output(const ModelGraph& graph, NodeId layer, std::optional<int> split = {});

/// Splits a Conv2D over its input channels at `split` (default c/2): two
/// channel Slices feed sibling convs on W[:, :, 0:split, :] and
/// W[:, :, split:c, :]; an Add takes over the layer's node id.
ModelGraph branch_input(const ModelGraph& graph, NodeId layer, std::optional<int> split = {});

/// Adds a zero-weight 3x3 Conv2D side branch on the layer's output, summed
/// back in with an Add that replaces the layer's output for all consumers.
ModelGraph skip(const ModelGraph& graph, NodeId layer);

/// Inserts an identity Conv2D (odd `kernel`) after the layer's activation:
/// the first ReLU on its single-consumer BatchNorm/ReLU chain, or directly
/// after the layer when it is linear.
ModelGraph deepen(const ModelGraph& graph, NodeId layer, int kernel = 3);

/// Identity kernel: 1 at the center tap where input channel == output
/// channel, 0 elsewhere. Layout k x k x channels x channels.
Weights identity_kernel(int kernel, int channels);

// ---------------------------------------------------------------------------
// Knobs and genomes

/// Declaration order is the fixed application order inside one slot.
enum class KnobOp : std::uint8_t { BranchIn = 0, BranchOut = 1, Deepen = 2, Skip = 3 };
inline constexpr std::array<KnobOp, 4> kKnobOps{KnobOp::BranchIn, KnobOp::BranchOut,
                                                KnobOp::Deepen, KnobOp::Skip};
inline constexpr std::array<int, 3> kDeepenKernels{1, 3, 5};

std::string_view to_string(KnobOp op);
std::optional<KnobOp> parse_knob_op(std::string_view name);

/// One genome slot: a kernel-emitting layer of the base graph, which knobs
/// apply to it, and the current gene values.
struct KnobSlot {
  NodeId layer_id = 0;
  std::array<bool, 4> applicable{};
  std::array<bool, 4> enabled{};
  int in_channels = 0;   // branch_input split range is [1, in_channels)
  int out_channels = 0;  // branch_output split range is [1, out_channels)
  int in_split = 0;
  int out_split = 0;
  int deepen_kernel = 3;

  bool can(KnobOp op) const { return applicable[static_cast<std::size_t>(op)]; }
  bool uses(KnobOp op) const { return enabled[static_cast<std::size_t>(op)]; }
  void set(KnobOp op, bool on) { enabled[static_cast<std::size_t>(op)] = on && can(op); }
  int enabled_count() const;
  int applicable_count() const;

  friend bool operator==(const KnobSlot&, const KnobSlot&) = default;
};

struct Genome {
  std::string base_name;
  std::uint64_t base_hash = 0;
  std::vector<KnobSlot> slots;

  bool compatible_with(const Genome& other) const;
  int enabled_count() const;

  friend bool operator==(const Genome&, const Genome&) = default;
};

/// Empty genome for `base`: one slot per kernel-emitting layer, no knob enabled,
/// parameters at their defaults.
Genome empty_genome(const ModelGraph& base);

/// Each applicable knob independently enabled with probability 1/2.
Genome random_genome(const ModelGraph& base, std::uint64_t seed);

/// Applies slot by slot, BranchIn -> BranchOut -> Deepen -> Skip within a
/// slot. Errors are rethrown as TransformError naming the slot index.
ModelGraph apply_genome(const ModelGraph& base, const Genome& genome);

nlohmann::json to_json(const Genome& genome);
/// Parses a genome document against its base graph (slot limits and
/// applicability come from the base). Throws DocumentError on mismatch.
Genome genome_from_json(const nlohmann::json& doc, const ModelGraph& base);

}  // namespace aliasforge
