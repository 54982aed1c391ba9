#include "tsq/tensor.hpp"

#include <cmath>
#include <sstream>

#include "tsq/error.hpp"

namespace tsq {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) {
    n *= d;
  }
  return n;
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.is_matrix()) {
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     t.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str() + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

std::size_t Tensor::rows() const {
  return shape.empty() ? 0 : shape.front();
}

std::size_t Tensor::cols() const {
  return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1];
}

std::string Tensor::shape_str() const { return tsq::shape_str(shape); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite value produced");
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape[1] != b.shape[0]) {
    throw ShapeError("matmul: inner dimensions differ: " + a.shape_str() +
                     " x " + b.shape_str());
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = a.data[i * k + kk];
      const double* brow = &b.data[kk * n];
      double* crow = &c.data[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
  check_finite(c, "matmul");
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.shape[1] != b.shape[1]) {
    throw ShapeError("matmul_nt: inner dimensions differ: " + a.shape_str() +
                     " x " + b.shape_str() + "^T");
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor c({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = &a.data[i * k];
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = &b.data[j * k];
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc += arow[kk] * brow[kk];
      }
      c.data[i * n + j] = acc;
    }
  }
  check_finite(c, "matmul_nt");
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.shape[0] != b.shape[0]) {
    throw ShapeError("matmul_tn: inner dimensions differ: " + a.shape_str() +
                     "^T x " + b.shape_str());
  }
  const std::size_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor c({m, n}, 0.0);
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = &a.data[kk * m];
    const double* brow = &b.data[kk * n];
    for (std::size_t i = 0; i < m; ++i) {
      const double aik = arow[i];
      double* crow = &c.data[i * n];
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += aik * brow[j];
      }
    }
  }
  check_finite(c, "matmul_tn");
  return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("add: shape mismatch: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    c.data[i] += b.data[i];
  }
  check_finite(c, "add");
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("sub: shape mismatch: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    c.data[i] -= b.data[i];
  }
  check_finite(c, "sub");
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError("mul: shape mismatch: " + a.shape_str() + " vs " +
                     b.shape_str());
  }
  Tensor c = a;
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    c.data[i] *= b.data[i];
  }
  check_finite(c, "mul");
  return c;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (double& v : out.data) {
    v *= c;
  }
  check_finite(out, "scale");
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data) {
    v = v > 0.0 ? v : 0.0;
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.shape[0], n = a.shape[1];
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      t.data[j * m + i] = a.data[i * n + j];
    }
  }
  return t;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const std::size_t m = a.shape[0], n = a.shape[1];
  if (n == 0) {
    throw ShapeError("softmax_rows: empty rows");
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &a.data[i * n];
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, row[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      out.data[i * n + j] = e;
      s += e;
    }
    for (std::size_t j = 0; j < n; ++j) {
      out.data[i * n + j] /= s;
    }
  }
  check_finite(out, "softmax_rows");
  return out;
}

double cross_entropy_mean(const Tensor& logits,
                          const std::vector<int>& labels) {
  require_matrix(logits, "cross_entropy");
  const std::size_t m = logits.shape[0], n = logits.shape[1];
  if (labels.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(m) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= n) {
      throw ShapeError("cross_entropy: label " + std::to_string(y) +
                       " outside [0," + std::to_string(n) + ")");
    }
    const double* row = &logits.data[i * n];
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) {
      mx = std::max(mx, row[j]);
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      s += std::exp(row[j] - mx);
    }
    total += mx + std::log(s) - row[y];
  }
  const double loss = total / static_cast<double>(m);
  if (!std::isfinite(loss)) {
    throw NumericError("cross_entropy: non-finite loss");
  }
  return loss;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data) {
    s += v;
  }
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    s += a[i] * b[i];
  }
  return s;
}

double l2_norm(const std::vector<double>& v) {
  return std::sqrt(dot(v, v));
}

}  // namespace tsq
