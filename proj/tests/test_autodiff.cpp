#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "tsq/autodiff.hpp"
#include "tsq/error.hpp"
#include "tsq/rng.hpp"
#include "tsq/tensor.hpp"

using namespace tsq;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     double scl = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) {
    v = scl * rng.gaussian();
  }
  return t;
}

// Central finite differences of a scalar function of one leaf entry.
double central_diff(const std::function<double(double)>& f, double x,
                    double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Checks every entry of `leaf` against finite differences of the rebuilt
// graph. `build` maps fresh leaf values to the scalar loss.
void check_leaf_gradient(
    const Tensor& leaf_value,
    const std::function<double(const Tensor&)>& loss_of_leaf,
    const Tensor& analytic_grad, double rel_tol) {
  const double h = 1e-5;
  for (std::size_t i = 0; i < leaf_value.data.size(); ++i) {
    Tensor probe = leaf_value;
    const double numeric = central_diff(
        [&](double x) {
          probe.data[i] = x;
          return loss_of_leaf(probe);
        },
        leaf_value.data[i], h);
    const double got = analytic_grad.data[i];
    const double denom = std::max({std::abs(numeric), std::abs(got), 1e-8});
    CHECK(std::abs(got - numeric) / denom <= rel_tol);
  }
}

}  // namespace

TEST_CASE("backward of sum gives an all-ones gradient") {
  GradTape tape;
  Rng rng(1);
  const Tensor x = random_tensor({3, 4}, rng);
  const auto xid = tape.leaf(x);
  const auto loss = tape.sum(xid);
  tape.backward(loss);
  for (double g : tape.grad(xid).data) {
    CHECK(g == 1.0);
  }
}

TEST_CASE("backward through a zero scale kills the gradient") {
  GradTape tape;
  Rng rng(2);
  const Tensor x = random_tensor({2, 3}, rng);
  const auto xid = tape.leaf(x);
  const auto y = tape.relu(xid);
  const auto loss = tape.scale(tape.sum(y), 0.0);
  tape.backward(loss);
  for (double g : tape.grad(xid).data) {
    CHECK(g == 0.0);
  }
}

TEST_CASE("backward rejects a non-scalar loss") {
  GradTape tape;
  const auto xid = tape.leaf(Tensor({2, 2}, 1.0));
  const auto y = tape.relu(xid);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("two-layer MLP gradients match central finite differences") {
  Rng rng(99);
  const Tensor x = random_tensor({4, 6}, rng);
  const std::vector<int> labels = {0, 2, 1, 2};
  Tensor w1 = random_tensor({5, 6}, rng, 0.7);
  Tensor b1 = random_tensor({5}, rng, 0.2);
  Tensor w2 = random_tensor({3, 5}, rng, 0.7);
  Tensor b2 = random_tensor({3}, rng, 0.2);
  // Keep pre-activations away from the relu kink so finite differences are
  // valid.
  for (double& v : b1.data) {
    v += 0.05;
  }

  struct Graph {
    GradTape tape;
    GradTape::Id w1, b1, w2, b2, loss;
  };
  const auto build = [&](const Tensor& w1v, const Tensor& b1v,
                         const Tensor& w2v, const Tensor& b2v) {
    Graph g;
    const auto xid = g.tape.leaf(x);
    g.w1 = g.tape.leaf(w1v);
    g.b1 = g.tape.leaf(b1v);
    g.w2 = g.tape.leaf(w2v);
    g.b2 = g.tape.leaf(b2v);
    auto h = g.tape.relu(g.tape.add_rowvec(g.tape.matmul_nt(xid, g.w1), g.b1));
    auto logits = g.tape.add_rowvec(g.tape.matmul_nt(h, g.w2), g.b2);
    g.loss = g.tape.cross_entropy(logits, labels);
    return g;
  };

  Graph g = build(w1, b1, w2, b2);
  g.tape.backward(g.loss);

  check_leaf_gradient(
      w1,
      [&](const Tensor& probe) {
        Graph fresh = build(probe, b1, w2, b2);
        return fresh.tape.value(fresh.loss).data[0];
      },
      g.tape.grad(g.w1), 1e-6);
  check_leaf_gradient(
      b1,
      [&](const Tensor& probe) {
        Graph fresh = build(w1, probe, w2, b2);
        return fresh.tape.value(fresh.loss).data[0];
      },
      g.tape.grad(g.b1), 1e-6);
  check_leaf_gradient(
      w2,
      [&](const Tensor& probe) {
        Graph fresh = build(w1, b1, probe, b2);
        return fresh.tape.value(fresh.loss).data[0];
      },
      g.tape.grad(g.w2), 1e-6);
  check_leaf_gradient(
      b2,
      [&](const Tensor& probe) {
        Graph fresh = build(w1, b1, w2, probe);
        return fresh.tape.value(fresh.loss).data[0];
      },
      g.tape.grad(g.b2), 1e-6);
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(123);

  SUBCASE("softmax_rows") {
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor probe_w = random_tensor({3, 4}, rng);
    const auto loss_of = [&](const Tensor& xv) {
      GradTape t;
      const auto id = t.leaf(xv);
      const auto sm = t.softmax_rows(id);
      return t.value(t.sum(t.mul(sm, t.leaf(probe_w)))).data[0];
    };
    GradTape t;
    const auto id = t.leaf(x);
    const auto sm = t.softmax_rows(id);
    const auto loss = t.sum(t.mul(sm, t.leaf(probe_w)));
    t.backward(loss);
    check_leaf_gradient(x, loss_of, t.grad(id), 1e-6);
  }

  SUBCASE("mul and scale") {
    const Tensor a = random_tensor({2, 5}, rng);
    const Tensor b = random_tensor({2, 5}, rng);
    const auto loss_of_a = [&](const Tensor& av) {
      GradTape t;
      return t.value(t.sum(t.scale(t.mul(t.leaf(av), t.leaf(b)), 1.7))).data[0];
    };
    GradTape t;
    const auto aid = t.leaf(a);
    const auto loss = t.sum(t.scale(t.mul(aid, t.leaf(b)), 1.7));
    t.backward(loss);
    check_leaf_gradient(a, loss_of_a, t.grad(aid), 1e-6);
  }

  SUBCASE("matmul both sides") {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    const auto loss_of_a = [&](const Tensor& av) {
      GradTape t;
      return t.value(t.sum(t.matmul(t.leaf(av), t.leaf(b)))).data[0];
    };
    const auto loss_of_b = [&](const Tensor& bv) {
      GradTape t;
      return t.value(t.sum(t.matmul(t.leaf(a), t.leaf(bv)))).data[0];
    };
    GradTape t;
    const auto aid = t.leaf(a);
    const auto bid = t.leaf(b);
    const auto loss = t.sum(t.matmul(aid, bid));
    t.backward(loss);
    check_leaf_gradient(a, loss_of_a, t.grad(aid), 1e-6);
    check_leaf_gradient(b, loss_of_b, t.grad(bid), 1e-6);
  }

  SUBCASE("matmul_nt both sides") {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({5, 4}, rng);
    const auto loss_of_a = [&](const Tensor& av) {
      GradTape t;
      return t.value(t.sum(t.matmul_nt(t.leaf(av), t.leaf(b)))).data[0];
    };
    const auto loss_of_b = [&](const Tensor& bv) {
      GradTape t;
      return t.value(t.sum(t.matmul_nt(t.leaf(a), t.leaf(bv)))).data[0];
    };
    GradTape t;
    const auto aid = t.leaf(a);
    const auto bid = t.leaf(b);
    const auto loss = t.sum(t.matmul_nt(aid, bid));
    t.backward(loss);
    check_leaf_gradient(a, loss_of_a, t.grad(aid), 1e-6);
    check_leaf_gradient(b, loss_of_b, t.grad(bid), 1e-6);
  }

  SUBCASE("add_rowvec bias") {
    const Tensor m = random_tensor({4, 3}, rng);
    const Tensor v = random_tensor({3}, rng);
    const std::vector<int> labels = {0, 1, 2, 1};
    const auto loss_of_v = [&](const Tensor& vv) {
      GradTape t;
      return t
          .value(t.cross_entropy(t.add_rowvec(t.leaf(m), t.leaf(vv)), labels))
          .data[0];
    };
    GradTape t;
    const auto vid = t.leaf(v);
    const auto loss = t.cross_entropy(t.add_rowvec(t.leaf(m), vid), labels);
    t.backward(loss);
    check_leaf_gradient(v, loss_of_v, t.grad(vid), 1e-6);
  }
}

TEST_CASE("gradients accumulate across reuse of a node") {
  GradTape tape;
  const auto x = tape.leaf(Tensor({1, 2}, {3.0, -1.5}));
  // loss = sum(x + x) = 2 * sum(x)
  const auto loss = tape.sum(tape.add(x, x));
  tape.backward(loss);
  for (double g : tape.grad(x).data) {
    CHECK(g == 2.0);
  }
}

TEST_CASE("identical inputs give bit-identical gradients") {
  Rng rng(77);
  const Tensor a = random_tensor({4, 4}, rng);
  const Tensor b = random_tensor({4, 4}, rng);
  std::vector<double> first;
  for (int trial = 0; trial < 3; ++trial) {
    GradTape t;
    const auto aid = t.leaf(a);
    const auto loss = t.sum(t.relu(t.matmul(aid, t.leaf(b))));
    t.backward(loss);
    if (trial == 0) {
      first = t.grad(aid).data;
    } else {
      CHECK(t.grad(aid).data == first);
    }
  }
}
