#include <cmath>
#include <vector>

#include "doctest.h"
#include "tsq/error.hpp"
#include "tsq/rng.hpp"
#include "tsq/tensor.hpp"

using namespace tsq;

namespace {

// Independent reference product: naive i,j,k triple loop.
Tensor reference_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc += a.at(i, kk) * b.at(kk, j);
      }
      c.at(i, j) = acc;
    }
  }
  return c;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    v = rng.gaussian();
  }
  return t;
}

}  // namespace

TEST_CASE("matmul identity leaves any 2x2 matrix unchanged") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor m = random_tensor({2, 2}, rng);
    const Tensor out = matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(out.data[i] == m.data[i]);
    }
  }
}

TEST_CASE("matmul by zero matrix annihilates") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor z({2, 2}, 0.0);
  const Tensor out = matmul(a, z);
  for (double v : out.data) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("matmul matches the triple-loop reference") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const Tensor got = matmul(a, b);
    const Tensor want = reference_matmul(a, b);
    for (std::size_t i = 0; i < got.data.size(); ++i) {
      CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  const Tensor a({3, 4});
  const Tensor b({5, 2});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       "matmul: inner dimensions differ: [3,4] x [5,2]",
                       ShapeError);
}

TEST_CASE("matmul is deterministic across calls") {
  Rng rng(3);
  const Tensor a = random_tensor({5, 7}, rng);
  const Tensor b = random_tensor({7, 3}, rng);
  const Tensor first = matmul(a, b);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor again = matmul(a, b);
    CHECK(again.data == first.data);
  }
}

TEST_CASE("transposed-product variants agree with explicit transpose") {
  Rng rng(11);
  const Tensor a = random_tensor({4, 6}, rng);
  const Tensor b = random_tensor({5, 6}, rng);
  const Tensor via_nt = matmul_nt(a, b);
  const Tensor via_plain = matmul(a, transpose(b));
  for (std::size_t i = 0; i < via_nt.data.size(); ++i) {
    CHECK(via_nt.data[i] == doctest::Approx(via_plain.data[i]).epsilon(1e-14));
  }
  const Tensor c = random_tensor({6, 4}, rng);
  const Tensor d = random_tensor({6, 3}, rng);
  const Tensor via_tn = matmul_tn(c, d);
  const Tensor via_plain2 = matmul(transpose(c), d);
  for (std::size_t i = 0; i < via_tn.data.size(); ++i) {
    CHECK(via_tn.data[i] == doctest::Approx(via_plain2.data[i]).epsilon(1e-14));
  }
}

TEST_CASE("softmax of an all-equal row is uniform") {
  const Tensor logits({1, 4}, {3.5, 3.5, 3.5, 3.5});
  const Tensor sm = softmax_rows(logits);
  for (double v : sm.data) {
    CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("softmax rows sum to one and stay inside (0,1)") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor logits = random_tensor({3, 6}, rng);
    logits = scale(logits, 10.0);
    const Tensor sm = softmax_rows(logits);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        const double p = sm.at(i, j);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        s += p;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cross entropy of [0,0] with label 0 is ln 2") {
  const Tensor logits({1, 2}, {0.0, 0.0});
  const double loss = cross_entropy_mean(logits, {0});
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("cross entropy saturates below 1e-20 at logit gap 50") {
  const Tensor logits({1, 3}, {50.0, 0.0, 0.0});
  CHECK(cross_entropy_mean(logits, {0}) < 1e-20);
}

TEST_CASE("cross entropy rejects labels outside the class range") {
  const Tensor logits({1, 3}, {0.0, 1.0, 2.0});
  CHECK_THROWS_AS((void)cross_entropy_mean(logits, {3}), ShapeError);
  CHECK_THROWS_AS((void)cross_entropy_mean(logits, {-1}), ShapeError);
}

TEST_CASE("non-finite results raise a numeric error") {
  const Tensor big({1, 2}, {1e308, 1e308});
  CHECK_THROWS_AS((void)add(big, big), NumericError);
}

TEST_CASE("tensor rejects shape and data length disagreement") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
}
