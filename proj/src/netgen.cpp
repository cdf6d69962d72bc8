#include "aliasforge/netgen.hpp"

#include <sstream>
#include <stdexcept>

#include "aliasforge/rng.hpp"

namespace aliasforge {

NetGenConfig NetGenConfig::preset(std::string_view name) {
  NetGenConfig cfg;
  if (name == "default") return cfg;
  if (name == "compact") {
    cfg.channel_choices = {4, 8, 16};
    cfg.fc_dim_choices = {16, 32};
    cfg.input = {3, 16, 16};
    return cfg;
  }
  if (name == "alternate") {
    cfg.channel_choices = {8, 24, 48, 96, 192};
    cfg.fc_dim_choices = {32, 96, 384};
    cfg.p_residual = 0.25;
    cfg.p_depthwise = 0.10;
    cfg.p_pool = 0.15;
    cfg.p_stride = 0.35;
    return cfg;
  }
  throw std::invalid_argument("unknown netgen preset \"" + std::string(name) + "\"");
}

void NetGenConfig::check() const {
  auto bad = [](const std::string& msg) { throw std::invalid_argument("netgen config: " + msg); };
  if (conv_min < 1 || conv_max < conv_min) bad("conv range empty");
  if (fc_min < 1 || fc_max < fc_min) bad("fc range empty");
  if (channel_choices.empty() || fc_dim_choices.empty()) bad("empty choice set");
  for (double p : {p_residual, p_depthwise, p_pool, p_stride})
    if (p < 0.0 || p > 1.0) bad("probability outside [0, 1]");
  if (p_residual + p_depthwise + p_pool > 1.0) bad("replacement probabilities sum above 1");
  if (input.c < 1 || input.h < 1 || input.w < 1 || input.h != input.w) bad("input must be square");
  if (classes < 1) bad("classes must be positive");
}

std::string NetGenConfig::canonical() const {
  std::ostringstream os;
  os << "conv=" << conv_min << '-' << conv_max << ";fc=" << fc_min << '-' << fc_max << ";ch=";
  for (int c : channel_choices) os << c << ',';
  os << ";fcdim=";
  for (int c : fc_dim_choices) os << c << ',';
  os << ";p=" << p_residual << ',' << p_depthwise << ',' << p_pool << ',' << p_stride
     << ";in=" << to_string(input) << ";classes=" << classes << ";weights=" << weights;
  return os.str();
}

GeneratedNet generate_net(const NetGenConfig& cfg, std::uint64_t seed) {
  cfg.check();
  Rng rng(derive_seed(seed, "netgen"));
  GraphBuilder b("netgen-" + std::to_string(seed));

  GeneratedNet net;
  net.conv_layers = static_cast<int>(rng.uniform_int(cfg.conv_min, cfg.conv_max));
  net.fc_layers = static_cast<int>(rng.uniform_int(cfg.fc_min, cfg.fc_max));

  NodeId x = b.input(cfg.input.c, cfg.input.h, cfg.input.w);
  auto stride_for = [&](NodeId src) {
    return b.shape(src).h > 4 && rng.bernoulli(cfg.p_stride) ? 2 : 1;
  };
  auto conv_bn_relu = [&](NodeId src, int out, int kernel, int stride, int groups) {
    return b.relu(b.batchnorm(b.conv(src, out, kernel, stride, groups)));
  };

  for (int i = 0; i < net.conv_layers; ++i) {
    const double u = rng.uniform();
    if (u < cfg.p_residual) {
      const int ch = b.shape(x).c;
      const NodeId mid = conv_bn_relu(x, ch, 3, 1, 1);
      const NodeId tail = b.batchnorm(b.conv(mid, ch, 3, 1, 1));
      x = b.relu(b.add({x, tail}));
    } else if (u < cfg.p_residual + cfg.p_depthwise) {
      const int ch = b.shape(x).c;
      const NodeId dw = conv_bn_relu(x, ch, 3, stride_for(x), ch);
      x = conv_bn_relu(dw, rng.pick(cfg.channel_choices), 1, 1, 1);
    } else if (u < cfg.p_residual + cfg.p_depthwise + cfg.p_pool && b.shape(x).h >= 2) {
      x = b.maxpool(x, 2, 2);
    } else {
      x = conv_bn_relu(x, rng.pick(cfg.channel_choices), 3, stride_for(x), 1);
    }
  }

  // Global average pool so the classifier head sees a fixed-size vector.
  if (const Shape s = b.shape(x); s.h > 1 || s.w > 1) x = b.avgpool(x, s.h, s.h);

  for (int i = 0; i < net.fc_layers; ++i) {
    const bool last = i + 1 == net.fc_layers;
    x = b.fc(x, last ? cfg.classes : rng.pick(cfg.fc_dim_choices));
    if (!last) x = b.relu(b.batchnorm(x));
  }

  net.graph = b.finish(x);
  if (cfg.weights) net.graph = materialize_weights(net.graph, derive_seed(seed, "netgen-weights"));
  net.graph = infer_shapes(net.graph);
  return net;
}

}  // namespace aliasforge
