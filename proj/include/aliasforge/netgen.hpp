#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "aliasforge/graph.hpp"

namespace aliasforge {

struct NetGenConfig {
  int conv_min = 4;
  int conv_max = 12;
  int fc_min = 1;
  int fc_max = 4;
  std::vector<int> channel_choices{16, 32, 64, 128, 256};
  std::vector<int> fc_dim_choices{64, 128, 256, 512};
  double p_residual = 0.15;   // conv -> ResNet basic block
  double p_depthwise = 0.15;  // conv -> MobileNet depthwise-separable block
  double p_pool = 0.2;        // conv -> 2x2 max pool
  double p_stride = 0.25;     // plain conv / depthwise downsamples while h > 4
  Shape input{3, 32, 32};
  int classes = 10;
  bool weights = true;        // materialize random N(0, 0.1) weights

  /// "default", "compact" (small channels, 16x16 input) or "alternate".
  static NetGenConfig preset(std::string_view name);
  /// Throws std::invalid_argument when ranges are empty or probabilities are out of range.
  void check() const;
  std::string canonical() const;
};

struct GeneratedNet {
  ModelGraph graph;
  int conv_layers = 0;  // drawn from [conv_min, conv_max], before block replacement
  int fc_layers = 0;
};

GeneratedNet generate_net(const NetGenConfig& cfg, std::uint64_t seed);

inline ModelGraph generate(const NetGenConfig& cfg, std::uint64_t seed) {
  return generate_net(cfg, seed).graph;
}

}  // namespace aliasforge
