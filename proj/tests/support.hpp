#pragma once

#include <string>

#include "aliasforge/graph.hpp"
#include "aliasforge/rng.hpp"
#include "aliasforge/tensor.hpp"

namespace testsupport {

inline std::string data_path(const std::string& name) {
  return std::string(ALIASFORGE_TEST_DATA) + "/" + name;
}

inline aliasforge::ModelGraph fixture() {
  return aliasforge::infer_shapes(aliasforge::load_model(data_path("resnet20-like.json")));
}

// Input(3,8,8) conv-BN-ReLU, pool, conv-BN-ReLU, global avgpool, FC(5).
inline aliasforge::ModelGraph small_cnn(bool weights = true, std::uint64_t seed = 7) {
  aliasforge::GraphBuilder b("small-cnn");
  auto x = b.input(3, 8, 8);
  x = b.relu(b.batchnorm(b.conv(x, 8)));
  x = b.maxpool(x, 2, 2);
  x = b.relu(b.batchnorm(b.conv(x, 6)));
  x = b.avgpool(x, 4, 4);
  x = b.fc(x, 5);
  auto g = aliasforge::infer_shapes(b.finish(x));
  return weights ? aliasforge::materialize_weights(g, seed) : g;
}

inline aliasforge::Tensor3 random_input(const aliasforge::ModelGraph& g, std::uint64_t seed) {
  aliasforge::Rng rng(seed);
  return aliasforge::Tensor3::random(g.node(g.input_id).input_shape(), rng);
}

}  // namespace testsupport
