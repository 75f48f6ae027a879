#pragma once

#include <cstdint>
#include <vector>

#include "diskcd/tensor.hpp"

namespace diskcd {

// Reverse-mode automatic differentiation over small dense tensors.
//
// Values are appended to the tape in creation order, which is already a
// topological order of the compute graph, so backward() is a single reverse
// sweep that visits each node once. Backward rules are only recorded when an
// input requires gradients; a forward pass over constant leaves carries no
// autodiff overhead beyond the stored values.
class Tape {
 public:
  struct Val {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void reserve(size_t n) { nodes_.reserve(n); }
  size_t size() const { return nodes_.size(); }

  // When enabled, every op result is scanned for NaN/Inf. Defaults to on in
  // debug builds only.
  void set_check_finite(bool on) { check_finite_ = on; }

  Val leaf(Tensor value, bool requires_grad = true);
  Val constant(Tensor value) { return leaf(std::move(value), false); }

  // ---- forward primitives ---------------------------------------------
  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);          // elementwise
  Val scalar_mul(Val a, double c);
  Val scale(Val v, Val s);        // tensor times tape scalar
  Val matmul(Val a, Val b);       // (m,k)x(k,n) -> (m,n), or (m,k)x(k,) -> (m,)
  Val dot(Val a, Val b);          // 1-D, 1-D -> scalar
  Val concat(Val a, Val b);       // 1-D
  Val pack(const std::vector<Val>& scalars);        // k scalars -> (k,)
  Val row(Val m, int64_t i);                        // row lookup into a matrix
  Val select(Val v, std::vector<int64_t> indices);  // 1-D gather
  Val sigmoid(Val a);
  Val leaky_relu(Val a, double slope);
  Val softmax(Val a);             // 1-D
  Val mean(Val a);
  Val sum(Val a);
  Val prod(Val a);                // 1-D
  Val log(Val a);
  Val clamp(Val a, double lo, double hi);
  // sum_i weights[i] * vecs[i], weights 1-D of length vecs.size()
  Val weighted_sum(Val weights, const std::vector<Val>& vecs);
  // -sum_i (y_i log p_i + (1-y_i) log(1-p_i)); preds 1-D, labels fixed
  Val bce_sum(Val preds, Tensor labels);

  const Tensor& value(Val v) const { return node(v).value; }
  bool requires_grad(Val v) const { return node(v).requires_grad; }

  // Populates gradients for every node that requires them; leaves with no path
  // to the loss keep zero gradient. Forward values are never touched.
  void backward(Val loss);

  // Valid after backward(); zero tensor for nodes the loss never reached.
  const Tensor& grad(Val v);

 private:
  enum class Op : uint8_t {
    Leaf, Add, Sub, Mul, ScalarMul, Scale, Matmul, Dot, Concat, Pack, Row,
    Select, Sigmoid, LeakyRelu, Softmax, Mean, Sum, Prod, Log, Clamp,
    WeightedSum, BceSum,
  };

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    Op op = Op::Leaf;
    bool requires_grad = false;
    std::vector<int32_t> inputs;
    std::vector<double> aux;    // slope, clamp bounds, labels, ...
    std::vector<int64_t> iaux;  // row index, gather indices
  };

  Node& node(Val v) { return nodes_[static_cast<size_t>(v.id)]; }
  const Node& node(Val v) const { return nodes_[static_cast<size_t>(v.id)]; }
  Val push(Node n);
  bool any_requires(const std::vector<int32_t>& ids) const;
  Tensor& grad_buf(int32_t id);
  void backward_node(int32_t id);

  std::vector<Node> nodes_;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

}  // namespace diskcd
