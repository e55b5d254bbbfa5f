#pragma once

#include <cstdint>
#include <vector>

#include "dmpp/tensor.hpp"

namespace dmpp::nn {

/// Reverse-mode differentiation tape over dense tensors. Nodes are recorded
/// in construction order (which is a topological order), values are computed
/// eagerly, and backward() walks the tape in reverse applying each op's
/// vector-Jacobian product.
///
/// Leaves created with leaf() carry the index of the parameter they were read
/// from; after backward() the accumulated adjoints are visited through
/// for_each_leaf_grad(). A Tape is single-threaded; use one per worker.
class Tape {
 public:
  using Id = int;

  Id constant(Tensor value);
  Id leaf(const Tensor& value, int param_index);

  /// 3x3 same convolution with zero padding: x (H,W,Cin), w (3,3,Cin,Cout),
  /// b (Cout) -> (H,W,Cout).
  Id conv2d_same3(Id x, Id w, Id b);
  /// Width-3 same convolution over a sequence: x (N,Cin), w (3,Cin,Cout),
  /// b (Cout) -> (N,Cout).
  Id conv1d_same3(Id x, Id w, Id b);
  Id relu(Id x);
  Id tanh_op(Id x);
  /// softmax over all entries; preserves shape.
  Id softmax_all(Id x);
  /// a (m,k) * b (k,n) -> (m,n)
  Id matmul(Id a, Id b);
  /// a (m,k) * b(n,k)^T -> (m,n)
  Id matmul_nt(Id a, Id b);
  /// w (out,in) * x (in) + b (out) -> (out); x may have any shape of size in.
  Id dense(Id w, Id x, Id b);
  /// Scales row p of x (P rows of C channels, C = last shape entry) by a[p].
  Id scale_rows(Id x, Id a);
  Id concat(const std::vector<Id>& parts);
  /// Gathers rows of table (R,D) at the given indices -> (n,D).
  Id gather_rows(Id table, std::vector<int> ids);
  /// Inverted dropout with a deterministic per-node mask drawn from `seed`.
  /// rate 0 keeps every entry with weight exactly 1.
  Id dropout(Id x, double rate, std::uint64_t seed);
  Id softplus(Id x);
  /// Shape change without touching values.
  Id reshape(Id x, std::vector<std::size_t> shape);

  const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].val; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = seed for a scalar root and accumulates adjoints
  /// down the tape. Node adjoints are reset first, so repeated calls are
  /// independent. Throws ConfigError if the tape is empty.
  void backward(Id root, double seed);

  template <class F>
  void for_each_leaf_grad(F f) const {
    for (const Node& n : nodes_) {
      if (n.param_index >= 0 && !n.grad.v.empty()) f(n.param_index, n.grad);
    }
  }

 private:
  enum class Op {
    Constant,
    Leaf,
    Conv2d,
    Conv1d,
    Relu,
    Tanh,
    Softmax,
    Matmul,
    MatmulNT,
    Dense,
    ScaleRows,
    Concat,
    Gather,
    Dropout,
    Softplus,
    Reshape,
  };

  struct Node {
    Op op = Op::Constant;
    Id a = -1, b = -1, c = -1;
    Tensor val;
    Tensor grad;
    int param_index = -1;
    std::vector<double> mask;   // dropout
    std::vector<int> ids;       // gather
    std::vector<Id> parts;      // concat
  };

  Id push(Node n);
  Node& at(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
};

}  // namespace dmpp::nn
