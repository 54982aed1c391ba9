#include "tsq/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "tsq/error.hpp"

namespace tsq {

GradTape::Id GradTape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<Id>(nodes_.size() - 1);
}

std::size_t GradTape::check(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw std::logic_error("tape: invalid node id " + std::to_string(id));
  }
  return static_cast<std::size_t>(id);
}

GradTape::Id GradTape::leaf(Tensor value) {
  check_finite(value, "leaf");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

GradTape::Id GradTape::matmul(Id a, Id b) {
  Node n;
  n.value = tsq::matmul(nodes_[check(a)].value, nodes_[check(b)].value);
  n.op = Op::kMatmul;
  n.parent_a = a;
  n.parent_b = b;
  return push(std::move(n));
}

GradTape::Id GradTape::matmul_nt(Id a, Id b) {
  Node n;
  n.value = tsq::matmul_nt(nodes_[check(a)].value, nodes_[check(b)].value);
  n.op = Op::kMatmulNt;
  n.parent_a = a;
  n.parent_b = b;
  return push(std::move(n));
}

GradTape::Id GradTape::add(Id a, Id b) {
  Node n;
  n.value = tsq::add(nodes_[check(a)].value, nodes_[check(b)].value);
  n.op = Op::kAdd;
  n.parent_a = a;
  n.parent_b = b;
  return push(std::move(n));
}

GradTape::Id GradTape::add_rowvec(Id m, Id v) {
  const Tensor& mat = nodes_[check(m)].value;
  const Tensor& vec = nodes_[check(v)].value;
  if (!mat.is_matrix() || vec.shape.size() != 1 ||
      vec.shape[0] != mat.shape[1]) {
    throw ShapeError("add_rowvec: shape mismatch: " + mat.shape_str() +
                     " vs " + vec.shape_str());
  }
  Node n;
  n.value = mat;
  const std::size_t rows = mat.shape[0], cols = mat.shape[1];
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      n.value.data[i * cols + j] += vec.data[j];
    }
  }
  check_finite(n.value, "add_rowvec");
  n.op = Op::kAddRowvec;
  n.parent_a = m;
  n.parent_b = v;
  return push(std::move(n));
}

GradTape::Id GradTape::mul(Id a, Id b) {
  Node n;
  n.value = tsq::mul(nodes_[check(a)].value, nodes_[check(b)].value);
  n.op = Op::kMul;
  n.parent_a = a;
  n.parent_b = b;
  return push(std::move(n));
}

GradTape::Id GradTape::scale(Id a, double c) {
  Node n;
  n.value = tsq::scale(nodes_[check(a)].value, c);
  n.op = Op::kScale;
  n.parent_a = a;
  n.scalar = c;
  return push(std::move(n));
}

GradTape::Id GradTape::relu(Id a) {
  Node n;
  n.value = tsq::relu(nodes_[check(a)].value);
  n.op = Op::kRelu;
  n.parent_a = a;
  return push(std::move(n));
}

GradTape::Id GradTape::softmax_rows(Id a) {
  Node n;
  n.value = tsq::softmax_rows(nodes_[check(a)].value);
  n.op = Op::kSoftmaxRows;
  n.parent_a = a;
  return push(std::move(n));
}

GradTape::Id GradTape::sum(Id a) {
  Node n;
  n.value = Tensor::scalar(tsq::sum(nodes_[check(a)].value));
  check_finite(n.value, "sum");
  n.op = Op::kSum;
  n.parent_a = a;
  return push(std::move(n));
}

GradTape::Id GradTape::cross_entropy(Id logits, std::vector<int> labels) {
  Node n;
  n.value =
      Tensor::scalar(tsq::cross_entropy_mean(nodes_[check(logits)].value, labels));
  n.op = Op::kCrossEntropy;
  n.parent_a = logits;
  n.labels = std::move(labels);
  return push(std::move(n));
}

const Tensor& GradTape::grad(Id id) const {
  if (!has_grads_) {
    throw std::logic_error("tape: grad() before backward()");
  }
  return nodes_[check(id)].grad;
}

void GradTape::backward(Id loss) {
  const std::size_t loss_idx = check(loss);
  if (!nodes_[loss_idx].value.is_scalar()) {
    throw ShapeError("backward: loss must be scalar, got shape " +
                     nodes_[loss_idx].value.shape_str());
  }
  for (Node& n : nodes_) {
    n.grad = Tensor(n.value.shape, 0.0);
  }
  nodes_[loss_idx].grad.data[0] = 1.0;
  has_grads_ = true;
  // Nodes created after the loss cannot be its ancestors (parents always have
  // smaller ids), so starting at the loss covers the full dependency cone.
  for (std::size_t i = loss_idx + 1; i-- > 0;) {
    backprop_node(nodes_[i]);
  }
}

void GradTape::backprop_node(Node& node) {
  switch (node.op) {
    case Op::kLeaf:
      return;
    case Op::kMatmul: {
      Node& a = nodes_[check(node.parent_a)];
      Node& b = nodes_[check(node.parent_b)];
      a.grad = tsq::add(a.grad, tsq::matmul_nt(node.grad, b.value));
      b.grad = tsq::add(b.grad, tsq::matmul_tn(a.value, node.grad));
      return;
    }
    case Op::kMatmulNt: {
      Node& a = nodes_[check(node.parent_a)];
      Node& b = nodes_[check(node.parent_b)];
      a.grad = tsq::add(a.grad, tsq::matmul(node.grad, b.value));
      b.grad = tsq::add(b.grad, tsq::matmul_tn(node.grad, a.value));
      return;
    }
    case Op::kAdd: {
      Node& a = nodes_[check(node.parent_a)];
      Node& b = nodes_[check(node.parent_b)];
      a.grad = tsq::add(a.grad, node.grad);
      b.grad = tsq::add(b.grad, node.grad);
      return;
    }
    case Op::kAddRowvec: {
      Node& m = nodes_[check(node.parent_a)];
      Node& v = nodes_[check(node.parent_b)];
      m.grad = tsq::add(m.grad, node.grad);
      const std::size_t rows = node.grad.shape[0], cols = node.grad.shape[1];
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          v.grad.data[j] += node.grad.data[i * cols + j];
        }
      }
      return;
    }
    case Op::kMul: {
      Node& a = nodes_[check(node.parent_a)];
      Node& b = nodes_[check(node.parent_b)];
      a.grad = tsq::add(a.grad, tsq::mul(node.grad, b.value));
      b.grad = tsq::add(b.grad, tsq::mul(node.grad, a.value));
      return;
    }
    case Op::kScale: {
      Node& a = nodes_[check(node.parent_a)];
      a.grad = tsq::add(a.grad, tsq::scale(node.grad, node.scalar));
      return;
    }
    case Op::kRelu: {
      Node& a = nodes_[check(node.parent_a)];
      for (std::size_t i = 0; i < a.grad.data.size(); ++i) {
        if (a.value.data[i] > 0.0) {
          a.grad.data[i] += node.grad.data[i];
        }
      }
      return;
    }
    case Op::kSoftmaxRows: {
      Node& a = nodes_[check(node.parent_a)];
      const std::size_t rows = node.value.shape[0], cols = node.value.shape[1];
      for (std::size_t i = 0; i < rows; ++i) {
        const double* y = &node.value.data[i * cols];
        const double* dy = &node.grad.data[i * cols];
        double dot_dy_y = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          dot_dy_y += dy[j] * y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
          a.grad.data[i * cols + j] += y[j] * (dy[j] - dot_dy_y);
        }
      }
      return;
    }
    case Op::kSum: {
      Node& a = nodes_[check(node.parent_a)];
      const double g = node.grad.data[0];
      for (double& v : a.grad.data) {
        v += g;
      }
      return;
    }
    case Op::kCrossEntropy: {
      Node& z = nodes_[check(node.parent_a)];
      const double g = node.grad.data[0];
      if (g == 0.0) {
        return;
      }
      const Tensor sm = tsq::softmax_rows(z.value);
      const std::size_t rows = sm.shape[0], cols = sm.shape[1];
      const double inv_n = 1.0 / static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          double d = sm.data[i * cols + j];
          if (static_cast<std::size_t>(node.labels[i]) == j) {
            d -= 1.0;
          }
          z.grad.data[i * cols + j] += g * d * inv_n;
        }
      }
      return;
    }
  }
}

}  // namespace tsq
