#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>

#include "aliasforge/netgen.hpp"
#include "aliasforge/trace.hpp"
#include "aliasforge/transforms.hpp"
#include "support.hpp"

using namespace aliasforge;

namespace {

struct Net {
  ModelGraph g;
  NodeId conv = 0;  // conv feeding BN-ReLU
  NodeId fc = 0;
};

// Input(c,6,6) -> conv(j) -> BN -> ReLU -> avgpool(6) -> FC(3)
Net conv_net(int c, int j, std::uint64_t seed = 1) {
  GraphBuilder b("conv-net");
  auto x = b.input(c, 6, 6);
  Net n;
  n.conv = b.conv(x, j);
  auto y = b.avgpool(b.relu(b.batchnorm(n.conv)), 6, 6);
  n.fc = b.fc(y, 3);
  n.g = materialize_weights(infer_shapes(b.finish(n.fc)), seed);
  return n;
}

void check_equivalent(const ModelGraph& a, const ModelGraph& b, int inputs = 10) {
  for (int i = 0; i < inputs; ++i) {
    const Tensor3 x = testsupport::random_input(a, static_cast<std::uint64_t>(100 + i));
    CHECK(outputs_close(forward(b, x), forward(a, x), 1e-4, 1e-6));
  }
}

std::size_t kernels(const ModelGraph& g) { return kernel_nodes(g).size(); }

std::vector<float> slice_last(const Weights& w, int lo, int hi) {
  const int j = w.shape.back();
  std::vector<float> out;
  for (std::size_t i = 0; i < w.data.size(); ++i) {
    const int o = static_cast<int>(i % static_cast<std::size_t>(j));
    if (o >= lo && o < hi) out.push_back(w.data[i]);
  }
  return out;
}

}  // namespace

TEST_CASE("branch_output splits output channels and joins with Concat") {
  SUBCASE("j=4, m=2") {
    const Net n = conv_net(3, 4);
    const ModelGraph g = branch_output(n.g, n.conv, 2);
    const auto& join = g.node(n.conv);
    REQUIRE(join.kind == LayerKind::Concat);
    REQUIRE(join.inputs.size() == 2);
    const auto& lo = g.node(join.inputs[0]);
    const auto& hi = g.node(join.inputs[1]);
    CHECK(lo.kind == LayerKind::Conv2D);
    CHECK(lo.j == 2);
    CHECK(hi.j == 2);
    CHECK(lo.weights->data == slice_last(*n.g.node(n.conv).weights, 0, 2));
    CHECK(hi.weights->data == slice_last(*n.g.node(n.conv).weights, 2, 4));
    CHECK(kernels(g) == kernels(n.g) + 2);
    check_equivalent(n.g, g);
  }
  SUBCASE("j=5 defaults to m=2") {
    const Net n = conv_net(3, 5);
    const ModelGraph g = branch_output(n.g, n.conv);
    const auto& join = g.node(n.conv);
    CHECK(g.node(join.inputs[0]).j == 2);
    CHECK(g.node(join.inputs[1]).j == 3);
    check_equivalent(n.g, g);
  }
  SUBCASE("fully connected") {
    const Net n = conv_net(3, 4);
    const ModelGraph g = branch_output(n.g, n.fc, 1);
    CHECK(g.node(n.fc).kind == LayerKind::Concat);
    check_equivalent(n.g, g);
  }
  SUBCASE("errors") {
    const Net n = conv_net(3, 4);
    const NodeId relu = n.g.consumers(n.g.consumers(n.conv).front()).front();
    CHECK_THROWS_AS(branch_output(n.g, relu), TransformError);
    CHECK_THROWS_AS(branch_output(n.g, n.conv, 0), TransformError);
    CHECK_THROWS_AS(branch_output(n.g, n.conv, 4), TransformError);
    const Net one = conv_net(3, 1);
    CHECK_THROWS_AS(branch_output(one.g, one.conv), TransformError);
  }
}

TEST_CASE("branch_input slices input channels and joins with Add") {
  SUBCASE("c=2, m=1") {
    const Net n = conv_net(2, 4);
    const ModelGraph g = branch_input(n.g, n.conv, 1);
    const auto& join = g.node(n.conv);
    REQUIRE(join.kind == LayerKind::Add);
    for (NodeId side : join.inputs) {
      CHECK(g.node(side).kind == LayerKind::Conv2D);
      CHECK(g.node(side).c == 1);
      CHECK(g.node(g.node(side).inputs.front()).kind == LayerKind::Slice);
    }
    CHECK(kernels(g) == kernels(n.g) + 2);
    check_equivalent(n.g, g);
  }
  SUBCASE("c=16 split at 8: payload k1*k2*8*j each") {
    const Net n = conv_net(16, 5);
    const ModelGraph g = branch_input(n.g, n.conv, 8);
    for (NodeId side : g.node(n.conv).inputs) CHECK(g.node(side).weights->data.size() == 3 * 3 * 8 * 5);
    check_equivalent(n.g, g);
  }
  SUBCASE("uneven split") {
    const Net n = conv_net(5, 3);
    check_equivalent(n.g, branch_input(n.g, n.conv, 4));
  }
  SUBCASE("errors") {
    const Net n = conv_net(4, 4);
    CHECK_THROWS_AS(branch_input(n.g, n.fc), TransformError);
    CHECK_THROWS_AS(branch_input(n.g, n.conv, 0), TransformError);
    CHECK_THROWS_AS(branch_input(n.g, n.conv, 4), TransformError);
    const Net one = conv_net(1, 4);
    CHECK_THROWS_AS(branch_input(one.g, one.conv), TransformError);
  }
}

TEST_CASE("skip adds a zero 3x3 conv and an Add") {
  const Net n = conv_net(3, 4);
  const ModelGraph g = skip(n.g, n.conv);
  check_equivalent(n.g, g);

  const auto before = to_sequence(n.g);
  const auto after = to_sequence(g);
  REQUIRE(after.size() == before.size() + 2);
  CHECK(after[0] == LayerKind::Conv2D);
  CHECK(after[1] == LayerKind::Conv2D);
  CHECK(after[2] == LayerKind::Add);
  CHECK(std::equal(before.begin() + 1, before.end(), after.begin() + 3));

  // The zero conv costs MACs = h*w*j*(3*3*j) like any conv of its shape.
  const TraceMatrix tm = trace(g);
  const auto& zero = tm.rows[1];
  CHECK(zero.cycles == 6.0 * 6 * 4 * (3 * 3 * 4) / 64.0);
  const auto& zero_node = g.node(zero.node_id);
  CHECK(std::all_of(zero_node.weights->data.begin(), zero_node.weights->data.end(),
                    [](float v) { return v == 0.0f; }));

  CHECK_THROWS_AS(skip(n.g, n.g.output_id), TransformError);
}

TEST_CASE("deepen inserts an identity conv after the activation") {
  SUBCASE("k=3, j=4: placed after the ReLU, 4 ones among 144 weights") {
    const Net n = conv_net(3, 4);
    const ModelGraph g = deepen(n.g, n.conv, 3);
    const NodeId relu = n.g.consumers(n.g.consumers(n.conv).front()).front();
    const auto after_relu = g.consumers(relu);
    REQUIRE(after_relu.size() == 1);
    const auto& id_conv = g.node(after_relu.front());
    CHECK(id_conv.kind == LayerKind::Conv2D);
    CHECK(id_conv.c == 4);
    CHECK(id_conv.j == 4);
    CHECK(id_conv.weights->data.size() == 144);
    CHECK(std::count(id_conv.weights->data.begin(), id_conv.weights->data.end(), 1.0f) == 4);
    CHECK(kernels(g) == kernels(n.g) + 1);
    check_equivalent(n.g, g);
  }
  SUBCASE("k=1 and k=5") {
    const Net n = conv_net(3, 4);
    check_equivalent(n.g, deepen(n.g, n.conv, 1));
    check_equivalent(n.g, deepen(n.g, n.conv, 5));
  }
  SUBCASE("linear layer: directly after it") {
    const Net n = conv_net(3, 4);
    const ModelGraph g = deepen(n.g, n.fc, 3);
    CHECK(g.node(g.consumers(n.fc).front()).kind == LayerKind::Conv2D);
    check_equivalent(n.g, g);
  }
  SUBCASE("errors") {
    const Net n = conv_net(3, 4);
    CHECK_THROWS_AS(deepen(n.g, n.conv, 2), TransformError);
    CHECK_THROWS_AS(deepen(n.g, n.conv, 0), TransformError);
    GraphBuilder b("pool");
    auto x = b.input(2, 4, 4);
    auto p = b.maxpool(b.conv(x, 2), 2, 2);
    const ModelGraph g = materialize_weights(b.finish(b.fc(p, 2)), 1);
    CHECK_THROWS_AS(deepen(g, p, 3), TransformError);
  }
}

TEST_CASE("transforms reject an invalid input graph") {
  Net n = conv_net(3, 4);
  n.g.node(n.fc).inputs = {777};
  CHECK_THROWS_AS(skip(n.g, n.conv), TransformError);
}

TEST_CASE("apply_genome") {
  SUBCASE("empty genome leaves the graph unchanged") {
    const Net n = conv_net(3, 4);
    CHECK(apply_genome(n.g, empty_genome(n.g)) == n.g);
  }
  SUBCASE("one {Skip} slot on a two-layer net adds 2 kernels") {
    GraphBuilder b("two");
    auto x = b.input(2, 4, 4);
    auto y = b.fc(b.relu(b.conv(x, 3)), 2);
    const ModelGraph g = materialize_weights(infer_shapes(b.finish(y)), 2);
    Genome gen = empty_genome(g);
    REQUIRE(gen.slots.size() == 2);
    gen.slots[0].set(KnobOp::Skip, true);
    const ModelGraph out = apply_genome(g, gen);
    CHECK(kernels(out) == 4);
    check_equivalent(g, out);
  }
  SUBCASE("all four ops on one conv stay equivalent") {
    const Net n = conv_net(6, 6);
    Genome gen = empty_genome(n.g);
    auto& slot = gen.slots.front();
    REQUIRE(slot.layer_id == n.conv);
    for (KnobOp op : kKnobOps) slot.set(op, true);
    slot.in_split = 2;
    slot.out_split = 5;
    slot.deepen_kernel = 5;
    const ModelGraph out = apply_genome(n.g, gen);
    CHECK(validate(out).ok());
    // BranchIn 1 -> 2 convs + Add; BranchOut on each piece: 4 convs + 2 Concat; Deepen +1; Skip +2.
    CHECK(kernels(out) == kernels(n.g) + 6 + 1 + 2);
    check_equivalent(n.g, out);
    CHECK(apply_genome(n.g, gen) == out);
  }
  SUBCASE("errors name the slot") {
    const Net n = conv_net(4, 4);
    Genome gen = empty_genome(n.g);
    gen.slots[0].set(KnobOp::BranchIn, true);
    gen.slots[0].in_split = 9;
    try {
      apply_genome(n.g, gen);
      FAIL("expected TransformError");
    } catch (const TransformError& e) {
      CHECK(std::string(e.what()).find("slot 0") != std::string::npos);
    }
    const Net other = conv_net(4, 5);
    CHECK_THROWS_AS(apply_genome(other.g, empty_genome(n.g)), TransformError);
  }
}

TEST_CASE("random_genome") {
  const Net n = conv_net(3, 4);
  const Genome blank = empty_genome(n.g);
  // FC carries BranchOut, Deepen and Skip.
  const auto fc_slot = static_cast<std::size_t>(
      std::find_if(blank.slots.begin(), blank.slots.end(), [&](const KnobSlot& s) { return s.layer_id == n.fc; }) -
      blank.slots.begin());
  REQUIRE(blank.slots[fc_slot].applicable_count() == 3);

  std::array<int, 4> hist{};
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++hist[static_cast<std::size_t>(random_genome(n.g, seed).slots[fc_slot].enabled_count())];
  const double expect[] = {0.125, 0.375, 0.375, 0.125};
  for (int k = 0; k < 4; ++k) {
    CAPTURE(k);
    CHECK(std::abs(hist[static_cast<std::size_t>(k)] / 10000.0 - expect[k]) <= 0.02);
  }

  CHECK(random_genome(n.g, 5) == random_genome(n.g, 5));
  CHECK_FALSE(random_genome(n.g, 5) == random_genome(n.g, 6));

  // Pools with no applicable op (MaxPool has Skip only; Add has none) stay empty.
  const ModelGraph fx = testsupport::fixture();
  for (std::uint64_t seed = 0; seed < 50; ++seed)
    for (const auto& s : random_genome(fx, seed).slots)
      if (s.applicable_count() == 0) CHECK(s.enabled_count() == 0);
}

TEST_CASE("genome document round trip and checks") {
  const ModelGraph fx = testsupport::fixture();
  Genome g = random_genome(fx, 3);
  g.slots[1].out_split = 5;
  g.slots[1].set(KnobOp::BranchOut, true);
  const auto doc = to_json(g);
  CHECK(genome_from_json(doc, fx) == g);
  CHECK(doc.at("base_model").at("name") == "resnet20-like");

  auto bad = doc;
  bad["slots"][1]["ops"] = nlohmann::json::array({{{"op", "BranchOut"}, {"params", {{"split", 99}}}}});
  CHECK_THROWS_AS(genome_from_json(bad, fx), DocumentError);
  bad = doc;
  bad["base_model"]["hash"] = "0000000000000000";
  CHECK_THROWS_AS(genome_from_json(bad, fx), DocumentError);
  bad = doc;
  bad["slots"][0]["ops"] = nlohmann::json::array({{{"op", "Widen"}}});
  CHECK_THROWS_AS(genome_from_json(bad, fx), DocumentError);
}

TEST_CASE("function preservation over netgen graphs and random genomes") {
  NetGenConfig cfg = NetGenConfig::preset("compact");
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    CAPTURE(seed);
    const ModelGraph g = generate(cfg, seed);
    const ModelGraph out = apply_genome(g, random_genome(g, seed + 1000));
    CHECK(validate(out).ok());
    CHECK(kernels(out) >= kernels(g));
    check_equivalent(g, out, 3);
  }
}

TEST_CASE("every single transform grows the kernel count and keeps validity") {
  NetGenConfig cfg = NetGenConfig::preset("compact");
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelGraph g = generate(cfg, seed);
    const Genome blank = empty_genome(g);
    for (const auto& slot : blank.slots) {
      if (slot.can(KnobOp::BranchOut)) {
        const auto out = branch_output(g, slot.layer_id);
        CHECK(validate(out).ok());
        CHECK(kernels(out) == kernels(g) + 2);
      }
      if (slot.can(KnobOp::BranchIn)) CHECK(kernels(branch_input(g, slot.layer_id)) == kernels(g) + 2);
      if (slot.can(KnobOp::Deepen)) CHECK(kernels(deepen(g, slot.layer_id)) == kernels(g) + 1);
      if (slot.can(KnobOp::Skip)) CHECK(kernels(skip(g, slot.layer_id)) == kernels(g) + 2);
    }
  }
}
