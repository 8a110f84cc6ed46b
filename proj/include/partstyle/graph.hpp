#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "partstyle/tensor.hpp"

namespace partstyle {

// Handle to a node inside a BasicGraph.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

// Define-by-run computation graph. Nodes are appended in creation order, which
// is a topological order because an op can only consume existing nodes.
// A graph is built for one forward pass and discarded after backward().
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using ParameterT = BasicParameter<T>;

  BasicGraph() = default;
  BasicGraph(const BasicGraph&) = delete;
  BasicGraph& operator=(const BasicGraph&) = delete;

  // Leaves.
  Var constant(TensorT value);
  Var input(TensorT value, bool requires_grad);
  Var param(ParameterT& p);

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  // Gradient of the last backward() w.r.t. this node; zeros if none flowed.
  TensorT grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
  const std::vector<int>& inputs_of(Var v) const { return nodes_.at(v.id).inputs; }

  // Elementwise, same shape.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  // a[r×c] + bias[c] broadcast over rows.
  Var add_row(Var a, Var bias);
  // a[c×n] + bias[c] broadcast over columns.
  Var add_col(Var a, Var bias);

  Var matmul(Var a, Var b);     // [m×k]·[k×n]
  Var matmul_nt(Var a, Var b);  // [m×k]·[n×k]ᵀ
  Var transpose(Var a);

  Var relu(Var a);
  Var tanh(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T(1e-5));
  Var softmax(Var x);
  Var embedding(Var table, std::span<const int> ids);
  Var l2_normalize_rows(Var x, T eps = T(1e-8));
  Var mean_rows(Var x);  // [r×c] -> [1×c]

  // x[C_in×N] ⋆ w[C_out×C_in×k] with zero padding.
  Var conv1d(Var x, Var w, int stride, int pad);
  Var upsample_nearest(Var x, int factor);  // [C×N] -> [C×N·factor]
  Var slice_cols(Var x, std::size_t begin, std::size_t end);

  Var sum(Var a);
  Var mean(Var a);
  Var sum_squares(Var a);

  enum class Reduction { Mean, Sum };
  Var cross_entropy(Var logits, std::span<const int> targets, Reduction red = Reduction::Mean);

  // Forward passes `a` unchanged; no gradient flows back through it.
  Var stop_gradient(Var a);
  // Forward value of `quantized`; backward copies the incoming gradient to
  // `latent` unchanged and sends nothing to `quantized`.
  Var straight_through(Var quantized, Var latent);

  // Fused multi-head scaled dot-product attention over already projected
  // q[Lq×d], k[Lk×d], v[Lk×d]. key_mask (length Lk, nonzero = visible) may be
  // empty. Fully masked query rows produce zeros.
  Var attention(Var q, Var k, Var v, int heads, bool causal, std::span<const std::uint8_t> key_mask = {});

  // Reverse sweep from a scalar node. Parameter leaves accumulate into
  // their .grad buffers.
  void backward(Var loss);

 private:
  struct Node {
    std::string op;
    TensorT value;
    TensorT grad;
    std::vector<int> inputs;
    bool needs_grad = false;
    ParameterT* param = nullptr;
    std::function<void(BasicGraph&, int)> backward;
  };

  Var push(std::string op, TensorT value, std::vector<int> inputs,
           std::function<void(BasicGraph&, int)> bw);
  bool any_needs_grad(const std::vector<int>& ids) const;
  TensorT& grad_buf(int id);
  bool wants(int id) const { return nodes_[id].needs_grad; }

  std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;
using Graph64 = BasicGraph<double>;

}  // namespace partstyle
