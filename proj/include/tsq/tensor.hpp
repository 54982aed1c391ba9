#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tsq {

// Dense row-major 64-bit float array. Tensors are plain values: copy freely,
// never shared mutable state. Every public operation leaves all entries
// finite or throws NumericError.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }
  bool is_matrix() const { return shape.size() == 2; }

  std::size_t rows() const;
  std::size_t cols() const;

  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  std::string shape_str() const;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Throws NumericError naming `op` if any entry of `t` is NaN or infinite.
void check_finite(const Tensor& t, const char* op);

// ---- raw deterministic ops (no autodiff) ----
// Matrix products accumulate over the inner index in ascending order, so
// repeated runs are bit-identical.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // [k,m]^T x [k,n]

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor transpose(const Tensor& a);

// Row-wise softmax with max-subtraction; rows sum to 1 within 1e-12.
Tensor softmax_rows(const Tensor& a);

// Mean negative log-likelihood over rows, log-sum-exp stabilized.
// Throws ShapeError when a label is outside [0, cols).
double cross_entropy_mean(const Tensor& logits, const std::vector<int>& labels);

double sum(const Tensor& a);
double dot(const std::vector<double>& a, const std::vector<double>& b);
double l2_norm(const std::vector<double>& v);

}  // namespace tsq
