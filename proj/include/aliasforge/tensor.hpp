#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "aliasforge/graph.hpp"
#include "aliasforge/rng.hpp"

namespace aliasforge {

/// Dense activation tensor, channel-major: index (ch * h + y) * w + x.
template <typename Scalar>
struct BasicTensor3 {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int c = 0;
  int h = 0;
  int w = 0;
  Vector data;

  BasicTensor3() = default;
  explicit BasicTensor3(const Shape& s) : c(s.c), h(s.h), w(s.w), data(Vector::Zero(s.elements())) {}

  Shape shape() const { return {c, h, w}; }
  Eigen::Index index(int ch, int y, int x) const {
    return (static_cast<Eigen::Index>(ch) * h + y) * w + x;
  }
  Scalar& operator()(int ch, int y, int x) { return data[index(ch, y, x)]; }
  Scalar operator()(int ch, int y, int x) const { return data[index(ch, y, x)]; }

  static BasicTensor3 random(const Shape& s, Rng& rng) {
    BasicTensor3 t(s);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<Scalar>(rng.normal());
    return t;
  }
};

using Tensor3 = BasicTensor3<float>;

class ExecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Evaluates one node from its input activations. Accumulates in double,
/// stores float. Convolution is cross-correlation with same padding.
Tensor3 evaluate_node(const LayerSpec& node, std::span<const Tensor3* const> inputs);

/// Runs the whole graph on a batch-1 input. Throws ExecError on an invalid
/// graph, missing weights or an input of the wrong shape.
Tensor3 forward(const ModelGraph& graph, const Tensor3& input);

/// True iff max_i |a_i - b_i| - rel_tol * |b_i| <= abs_tol. Throws on shape mismatch.
bool outputs_close(const Tensor3& a, const Tensor3& b, double rel_tol, double abs_tol);

// Raw tensor file: three little-endian uint32 dims (c, h, w) then c*h*w
// little-endian IEEE-754 float32 values.
void write_tensor(const Tensor3& t, const std::string& path);
Tensor3 read_tensor(const std::string& path);

}  // namespace aliasforge
