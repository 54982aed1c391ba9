#pragma once

#include <cstdint>
#include <vector>

#include "tsq/tensor.hpp"

namespace tsq {

// Reverse-mode tape over a fixed primitive set. Each op records its parents;
// backward() walks the nodes in exact reverse execution order, so gradient
// accumulation is deterministic. One tape per forward pass, single-threaded.
//
// Backward rules:
//   matmul     C = A B        dA += dC B^T          dB += A^T dC
//   matmul_nt  C = A B^T      dA += dC B            dB += dC^T A
//   add        C = A + B      dA += dC              dB += dC
//   add_rowvec C = M + 1 v^T  dM += dC              dv += column sums of dC
//   mul        C = A .* B     dA += dC .* B         dB += dC .* A
//   scale      C = c A        dA += c dC
//   relu       C = max(A,0)   dA += dC .* [A > 0]
//   softmax    Y = sm(A)      dA_row += y .* (dY_row - <dY_row, y>)
//   sum        s = sum(A)     dA += ds
//   cross_entropy  s = mean_i (lse(z_i) - z_i[y_i])
//                  dZ += ds (softmax(Z) - onehot(y)) / n
class GradTape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor value);

  Id matmul(Id a, Id b);
  Id matmul_nt(Id a, Id b);
  Id add(Id a, Id b);
  Id add_rowvec(Id m, Id v);  // m: [n,d], v: [d]
  Id mul(Id a, Id b);
  Id scale(Id a, double c);
  Id relu(Id a);
  Id softmax_rows(Id a);
  Id sum(Id a);
  Id cross_entropy(Id logits, std::vector<int> labels);

  // Seeds d(loss)/d(loss) = 1 and propagates adjoints to every node created
  // at or before `loss`. Throws ShapeError if loss is not scalar.
  void backward(Id loss);

  const Tensor& value(Id id) const { return nodes_[check(id)].value; }
  // Valid after backward(); zero tensors for nodes the loss does not reach.
  const Tensor& grad(Id id) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kMatmulNt,
    kAdd,
    kAddRowvec,
    kMul,
    kScale,
    kRelu,
    kSoftmaxRows,
    kSum,
    kCrossEntropy,
  };

  struct Node {
    Tensor value;
    Tensor grad;
    Op op = Op::kLeaf;
    Id parent_a = -1;
    Id parent_b = -1;
    double scalar = 0.0;
    std::vector<int> labels;
  };

  Id push(Node node);
  std::size_t check(Id id) const;
  void backprop_node(Node& node);

  std::vector<Node> nodes_;
  bool has_grads_ = false;
};

}  // namespace tsq
