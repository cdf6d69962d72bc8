#include "aliasforge/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>

namespace aliasforge {

namespace {

using MatrixXdR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixXfR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const Weights& require_weights(const LayerSpec& n) {
  if (!n.weights) throw ExecError("node " + std::to_string(n.id) + " (" +
                                  std::string(to_string(n.kind)) + ") has no weights");
  if (n.weights->data.size() != n.expected_weight_count())
    throw ExecError("node " + std::to_string(n.id) + ": weight count mismatch");
  return *n.weights;
}

Tensor3 conv2d(const LayerSpec& n, const Tensor3& x) {
  const auto& wts = require_weights(n);
  const int out_h = (x.h + n.stride - 1) / n.stride;
  const int out_w = (x.w + n.stride - 1) / n.stride;
  const int pad_top = std::max((out_h - 1) * n.stride + n.k1 - x.h, 0) / 2;
  const int pad_left = std::max((out_w - 1) * n.stride + n.k2 - x.w, 0) / 2;
  const int cin_g = n.c / n.groups;
  const int jout_g = n.j / n.groups;
  const Eigen::Index positions = static_cast<Eigen::Index>(out_h) * out_w;
  const Eigen::Index taps = static_cast<Eigen::Index>(n.k1) * n.k2 * cin_g;

  const Eigen::Map<const MatrixXfR> weights(wts.data.data(), taps, n.j);
  Tensor3 y(Shape{n.j, out_h, out_w});
  Eigen::Map<Eigen::MatrixXf> y_mat(y.data.data(), positions, n.j);  // column = channel

  MatrixXdR cols(positions, taps);
  for (int g = 0; g < n.groups; ++g) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index p = static_cast<Eigen::Index>(oy) * out_w + ox;
        Eigen::Index col = 0;
        for (int a = 0; a < n.k1; ++a) {
          const int iy = oy * n.stride + a - pad_top;
          for (int b = 0; b < n.k2; ++b) {
            const int ix = ox * n.stride + b - pad_left;
            const bool inside = iy >= 0 && iy < x.h && ix >= 0 && ix < x.w;
            for (int ci = 0; ci < cin_g; ++ci, ++col)
              cols(p, col) = inside ? static_cast<double>(x(g * cin_g + ci, iy, ix)) : 0.0;
          }
        }
      }
    }
    const Eigen::MatrixXd w_g = weights.middleCols(g * jout_g, jout_g).cast<double>();
    y_mat.middleCols(g * jout_g, jout_g) = (cols * w_g).cast<float>();
  }
  return y;
}

Tensor3 fully_connected(const LayerSpec& n, const Tensor3& x) {
  const auto& wts = require_weights(n);
  const Eigen::Map<const MatrixXfR> weights(wts.data.data(), n.c, n.j);
  Tensor3 y(Shape{n.j, 1, 1});
  y.data = (weights.cast<double>().transpose() * x.data.cast<double>()).cast<float>();
  return y;
}

Tensor3 batchnorm(const LayerSpec& n, const Tensor3& x) {
  const auto& wts = require_weights(n);
  const auto ch = static_cast<std::size_t>(n.c);
  Tensor3 y(x.shape());
  const Eigen::Index plane = static_cast<Eigen::Index>(x.h) * x.w;
  for (std::size_t k = 0; k < ch; ++k) {
    const double scale = wts.data[k];
    const double shift = wts.data[ch + k];
    const double mean = wts.data[2 * ch + k];
    const double var = wts.data[3 * ch + k];
    const double inv = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    const auto off = static_cast<Eigen::Index>(k) * plane;
    for (Eigen::Index i = 0; i < plane; ++i)
      y.data[off + i] = static_cast<float>((x.data[off + i] - mean) * inv * scale + shift);
  }
  return y;
}

Tensor3 pool(const LayerSpec& n, const Tensor3& x, bool is_max) {
  const int out_h = (x.h - n.k1) / n.stride + 1;
  const int out_w = (x.w - n.k2) / n.stride + 1;
  Tensor3 y(Shape{x.c, out_h, out_w});
  const double window = static_cast<double>(n.k1) * n.k2;
  for (int ch = 0; ch < x.c; ++ch) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
        for (int a = 0; a < n.k1; ++a) {
          for (int b = 0; b < n.k2; ++b) {
            const double v = x(ch, oy * n.stride + a, ox * n.stride + b);
            acc = is_max ? std::max(acc, v) : acc + v;
          }
        }
        y(ch, oy, ox) = static_cast<float>(is_max ? acc : acc / window);
      }
    }
  }
  return y;
}

}  // namespace

Tensor3 evaluate_node(const LayerSpec& n, std::span<const Tensor3* const> in) {
  switch (n.kind) {
    case LayerKind::Input:
      throw ExecError("Input nodes are fed, not evaluated");
    case LayerKind::Output:
      return *in[0];
    case LayerKind::Conv2D:
      return conv2d(n, *in[0]);
    case LayerKind::FullyConnected:
      return fully_connected(n, *in[0]);
    case LayerKind::ReLU: {
      Tensor3 y = *in[0];
      y.data = y.data.cwiseMax(0.0f);
      return y;
    }
    case LayerKind::BatchNorm:
      return batchnorm(n, *in[0]);
    case LayerKind::MaxPool2D:
      return pool(n, *in[0], true);
    case LayerKind::AvgPool2D:
      return pool(n, *in[0], false);
    case LayerKind::Add: {
      Eigen::VectorXd acc = in[0]->data.cast<double>();
      for (std::size_t i = 1; i < in.size(); ++i) acc += in[i]->data.cast<double>();
      Tensor3 y(in[0]->shape());
      y.data = acc.cast<float>();
      return y;
    }
    case LayerKind::Concat: {
      int total = 0;
      for (const auto* t : in) total += t->c;
      Tensor3 y(Shape{total, in[0]->h, in[0]->w});
      Eigen::Index off = 0;
      for (const auto* t : in) {
        y.data.segment(off, t->data.size()) = t->data;
        off += t->data.size();
      }
      return y;
    }
    case LayerKind::Slice: {
      const Tensor3& x = *in[0];
      Tensor3 y(Shape{n.j, x.h, x.w});
      const Eigen::Index plane = static_cast<Eigen::Index>(x.h) * x.w;
      y.data = x.data.segment(n.offset * plane, n.j * plane);
      return y;
    }
  }
  throw ExecError("unknown node kind");
}

Tensor3 forward(const ModelGraph& graph, const Tensor3& input) {
  const auto report = validate(graph);
  if (!report.ok()) throw ExecError("forward on invalid graph:\n" + report.summary());
  const auto& in_node = graph.node(graph.input_id);
  if (input.shape() != in_node.input_shape())
    throw ExecError("input shape " + to_string(input.shape()) + " does not match model input " +
                    to_string(in_node.input_shape()));

  const auto order = topological_order(graph);
  // Drop activations once their last consumer has run.
  std::map<NodeId, std::size_t> remaining;
  for (const auto& [id, n] : graph.nodes)
    for (NodeId src : n.inputs) ++remaining[src];

  std::map<NodeId, Tensor3> values;
  values[graph.input_id] = input;
  for (NodeId id : order) {
    const auto& n = graph.node(id);
    if (n.kind == LayerKind::Input) continue;
    std::vector<const Tensor3*> args;
    args.reserve(n.inputs.size());
    for (NodeId src : n.inputs) args.push_back(&values.at(src));
    values[id] = evaluate_node(n, args);
    for (NodeId src : n.inputs)
      if (--remaining[src] == 0 && src != graph.output_id) values.erase(src);
  }
  return values.at(graph.output_id);
}

bool outputs_close(const Tensor3& a, const Tensor3& b, double rel_tol, double abs_tol) {
  if (a.shape() != b.shape())
    throw ExecError("outputs_close: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const Eigen::ArrayXd ad = a.data.cast<double>().array();
  const Eigen::ArrayXd bd = b.data.cast<double>().array();
  if (ad.size() == 0) return true;
  return ((ad - bd).abs() - rel_tol * bd.abs()).maxCoeff() <= abs_tol;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                  static_cast<unsigned char>(v >> 16),
                                  static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char bytes[4];
  if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw ExecError(path + ": truncated tensor file");
  return std::uint32_t{bytes[0]} | std::uint32_t{bytes[1]} << 8 | std::uint32_t{bytes[2]} << 16 |
         std::uint32_t{bytes[3]} << 24;
}

}  // namespace

void write_tensor(const Tensor3& t, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ExecError(path + ": cannot write");
  put_u32(os, static_cast<std::uint32_t>(t.c));
  put_u32(os, static_cast<std::uint32_t>(t.h));
  put_u32(os, static_cast<std::uint32_t>(t.w));
  for (Eigen::Index i = 0; i < t.data.size(); ++i) put_u32(os, std::bit_cast<std::uint32_t>(t.data[i]));
}

Tensor3 read_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ExecError(path + ": cannot open");
  Shape s;
  s.c = static_cast<int>(get_u32(is, path));
  s.h = static_cast<int>(get_u32(is, path));
  s.w = static_cast<int>(get_u32(is, path));
  Tensor3 t(s);
  for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = std::bit_cast<float>(get_u32(is, path));
  return t;
}

}  // namespace aliasforge
