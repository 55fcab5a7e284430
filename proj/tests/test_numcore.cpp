#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <random>

#include "gram/tensor.hpp"

using namespace gram;
using num::Graph;
using num::TensorPtr;

namespace {

TensorPtr rand_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                      bool requires_grad = true) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> data(n);
  for (double& x : data) x = d(rng);
  return num::make_tensor(std::move(shape), std::move(data), requires_grad);
}

// Central finite differences against the tape gradient. loss_fn must build
// a fresh graph over the same leaf tensors each call.
void check_grad(const std::vector<TensorPtr>& leaves,
                const std::function<TensorPtr(Graph&)>& loss_fn, double h = 1e-5,
                double tol = 1e-6) {
  Graph g;
  TensorPtr loss = loss_fn(g);
  REQUIRE(loss->size() == 1);
  g.backward(loss);
  for (const auto& leaf : leaves) {
    REQUIRE(leaf->grad.size() == leaf->data.size());
    for (std::size_t i = 0; i < leaf->data.size(); ++i) {
      const double keep = leaf->data[i];
      leaf->data[i] = keep + h;
      Graph gp;
      const double up = loss_fn(gp)->data[0];
      leaf->data[i] = keep - h;
      Graph gm;
      const double dn = loss_fn(gm)->data[0];
      leaf->data[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = leaf->grad[i];
      const double scale = std::max({1.0, std::abs(fd), std::abs(ad)});
      CHECK(std::abs(fd - ad) / scale < tol);
    }
  }
}

}  // namespace

TEST_CASE("matmul and add gradients match finite differences") {
  auto a = rand_tensor({3, 4}, 1);
  auto b = rand_tensor({4, 2}, 2);
  auto c = rand_tensor({3, 2}, 3);
  check_grad({a, b, c}, [&](Graph& g) {
    TensorPtr prod = g.add(g.matmul(a, b), c);
    // square the entries through dotv on the flattened rows
    TensorPtr flat = g.gather(prod, {0, 1, 2, 3, 4, 5});
    return g.dotv(flat, flat);
  });
}

TEST_CASE("softmax_logprob rows are normalized and differentiable") {
  auto x = rand_tensor({3, 5}, 4);
  {
    Graph g(false);
    TensorPtr lp = g.softmax_logprob(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 5; ++c) total += std::exp(lp->at(r, c));
      CHECK(std::abs(total - 1.0) < 1e-12);
    }
  }
  check_grad({x}, [&](Graph& g) {
    TensorPtr lp = g.softmax_logprob(x, 1);
    return g.pick_nll(lp, {0, 1, 2}, {2, 0, 4}, {1.0, 0.5, 2.0});
  });

  auto v = rand_tensor({7}, 5);
  check_grad({v}, [&](Graph& g) {
    TensorPtr lp = g.softmax_logprob(v, 0);
    return g.weighted_sum(lp, {0.3, -1.0, 0.0, 2.0, 0.1, 0.0, -0.4});
  });
}

TEST_CASE("rmsnorm, gelu and softplus gradients match finite differences") {
  auto x = rand_tensor({2, 6}, 6);
  auto gain = rand_tensor({6}, 7);
  check_grad({x, gain}, [&](Graph& g) {
    TensorPtr y = g.gelu(g.rmsnorm(x, gain));
    TensorPtr flat = g.gather(y, {0, 3, 5, 7, 11});
    return g.weighted_sum(flat, {1.0, -2.0, 0.5, 1.5, -0.25});
  });

  auto z = rand_tensor({4}, 8);
  check_grad({z}, [&](Graph& g) {
    return g.weighted_sum(g.softplus(z), {1.0, 1.0, -3.0, 0.5});
  });
}

TEST_CASE("attention gradient matches finite differences") {
  const std::size_t T = 5, d = 8;
  auto q = rand_tensor({T, d}, 9);
  auto k = rand_tensor({T, d}, 10);
  auto v = rand_tensor({T, d}, 11);
  std::vector<double> w(T * d);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (double& x : w) x = nd(rng);
  check_grad({q, k, v}, [&](Graph& g) {
    TensorPtr o = g.causal_self_attention(q, k, v, 2);
    std::vector<std::size_t> idx(T * d);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return g.weighted_sum(g.gather(o, idx), w);
  }, 1e-5, 1e-5);
}

TEST_CASE("attention is causal: later positions do not affect earlier outputs") {
  const std::size_t T = 6, d = 4;
  auto q = rand_tensor({T, d}, 13, false);
  auto k = rand_tensor({T, d}, 14, false);
  auto v = rand_tensor({T, d}, 15, false);
  Graph g(false);
  TensorPtr base = g.causal_self_attention(q, k, v, 2);
  // perturb the last position's key/value/query
  for (std::size_t j = 0; j < d; ++j) {
    k->at(T - 1, j) += 3.0;
    v->at(T - 1, j) -= 2.0;
    q->at(T - 1, j) += 1.0;
  }
  Graph g2(false);
  TensorPtr bumped = g2.causal_self_attention(q, k, v, 2);
  for (std::size_t t = 0; t + 1 < T; ++t)
    for (std::size_t j = 0; j < d; ++j) CHECK(base->at(t, j) == bumped->at(t, j));
}

TEST_CASE("fan-out accumulates gradients additively") {
  auto x = num::make_tensor({2}, {3.0, -1.0}, true);
  Graph g;
  // loss = dot(x, x) + dot(x, x): grad should be 4x
  TensorPtr loss = g.add(g.dotv(x, x), g.dotv(x, x));
  g.backward(loss);
  CHECK(x->grad[0] == doctest::Approx(4.0 * 3.0));
  CHECK(x->grad[1] == doctest::Approx(4.0 * -1.0));
}

TEST_CASE("backward is deterministic across repeated runs") {
  auto a = rand_tensor({4, 4}, 16);
  auto b = rand_tensor({4, 4}, 17);
  std::vector<double> first;
  for (int run = 0; run < 2; ++run) {
    a->zero_grad();
    b->zero_grad();
    Graph g;
    TensorPtr m = g.matmul(a, b);
    TensorPtr flat = g.gather(m, {0, 5, 10, 15});
    TensorPtr loss = g.dotv(flat, flat);
    g.backward(loss);
    if (run == 0) {
      first = a->grad;
    } else {
      CHECK(a->grad == first);
    }
  }
}

TEST_CASE("shape mismatches are rejected") {
  Graph g;
  auto a = rand_tensor({2, 3}, 18);
  auto b = rand_tensor({2, 3}, 19);
  CHECK_THROWS_AS(g.matmul(a, b), DimensionError);
  auto v = rand_tensor({4}, 20);
  CHECK_THROWS_AS(g.dotv(v, rand_tensor({5}, 21)), DimensionError);
  CHECK_THROWS_AS(g.add(a, rand_tensor({3, 2}, 22)), DimensionError);
}

TEST_CASE("backward requires a recorded scalar root") {
  Graph g;
  auto a = rand_tensor({2, 2}, 23);
  TensorPtr m = g.matmul(a, a);
  CHECK_THROWS_AS(g.backward(m), ContractError);  // not a scalar
}
