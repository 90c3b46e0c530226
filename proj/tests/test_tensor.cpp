#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "seqdream/common.hpp"
#include "seqdream/tensor.hpp"

using namespace seqdream;

namespace {

Tensor randn_tensor(std::vector<int> shape, uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& x : t.data) x = dist(rng);
  return t;
}

// Small eval-mode network + sd-style dream loss over a [1,L] input, with fixed
// seeded weights. Captured state must outlive the returned builder.
struct TinyNet {
  Tensor w1, b1, gamma, beta, fcw, fcb;
  BatchNormState bn;
  std::vector<double> target;

  explicit TinyNet(int len) {
    w1 = randn_tensor({3, 1, 5}, 101);
    b1 = randn_tensor({3}, 102);
    gamma = Tensor::full({3}, 1.2);
    beta = Tensor::full({3}, 0.1);
    fcw = randn_tensor({2, 3}, 103);
    fcb = randn_tensor({2}, 104);
    bn.running_mean = {0.1, -0.2, 0.3};
    bn.running_var = {1.1, 0.9, 1.4};
    target = {2.0, -1.0};
    (void)len;
  }

  Tape::Id loss(Tape& tape, Tape::Id x) {
    auto h = tape.conv1d(x, tape.leaf(w1), tape.leaf(b1));
    h = tape.batchnorm1d(h, tape.leaf(gamma), tape.leaf(beta), bn, BnMode::eval);
    h = tape.relu(h);
    auto pooled = tape.global_avg_pool(h);
    auto logits = tape.linear(pooled, tape.leaf(fcw), tape.leaf(fcb));
    double t2 = 0.0;
    for (double t : target) t2 += t * t;
    auto dist = tape.scale(tape.sum_sq(tape.sub_const(logits, target)), 1.0 / t2);
    auto reg_a = tape.scale(tape.alpha_norm(x, 6.0), 1e-3);
    auto reg_tv = tape.scale(tape.tv(x, 2.0), 1e-2);
    auto reg_sm = tape.scale(tape.sm(x), 0.1);
    return tape.add(tape.add(tape.add(dist, reg_a), reg_tv), reg_sm);
  }
};

}  // namespace

TEST_CASE("backward of sum of squares, with accumulation across calls") {
  Tape tape;
  auto x = tape.leaf({2}, {1.0, 2.0}, true);
  auto root = tape.sum_sq(x);
  tape.backward(root);
  CHECK(tape.grad(x)[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(tape.grad(x)[1] == doctest::Approx(4.0).epsilon(1e-15));
  tape.backward(root);  // documented: accumulates without zero_grad
  CHECK(tape.grad(x)[0] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(tape.grad(x)[1] == doctest::Approx(8.0).epsilon(1e-15));
  tape.zero_grad();
  tape.backward(root);
  CHECK(tape.grad(x)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("relu blocks gradient for negative inputs") {
  Tape tape;
  auto x = tape.leaf({2}, {-3.0, 2.0}, true);
  auto root = tape.sum_sq(tape.relu(x));
  tape.backward(root);
  CHECK(tape.grad(x)[0] == 0.0);
  CHECK(tape.grad(x)[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape tape;
  auto x = tape.leaf({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("softmax cross entropy values") {
  Tape tape;
  auto a = tape.softmax_cross_entropy(tape.leaf({2}, {0.0, 0.0}), 0);
  CHECK(tape.scalar(a) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  auto b = tape.softmax_cross_entropy(tape.leaf({2}, {100.0, 0.0}), 0);
  CHECK(tape.scalar(b) < 1e-10);
  auto c = tape.softmax_cross_entropy(tape.leaf({2}, {1.0, 2.0}), 1);
  CHECK(tape.scalar(c) == doctest::Approx(0.313262).epsilon(1e-5));
  CHECK_THROWS_AS(tape.softmax_cross_entropy(tape.leaf({2}, {0.0, 0.0}), 2), Error);
}

TEST_CASE("softmax probabilities implied by the gradient sum to 1") {
  Tape tape;
  auto logits = tape.leaf({4}, {0.3, -1.2, 2.0, 0.7}, true);
  auto loss = tape.softmax_cross_entropy(logits, 2);
  tape.backward(loss);
  const auto& g = tape.grad(logits);
  double psum = 0.0;
  for (int i = 0; i < 4; ++i) psum += g[i] + (i == 2 ? 1.0 : 0.0);
  CHECK(psum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("batched cross entropy equals the mean of per-sample losses") {
  Tape tape;
  const std::vector<double> rows{0.5, -0.2, 1.5, 0.0, -1.0, 2.0};
  auto batched = tape.softmax_cross_entropy_mean(tape.leaf({3, 2}, rows), {0, 1, 1});
  double mean = 0.0;
  for (int r = 0; r < 3; ++r) {
    Tape t;
    mean += t.scalar(t.softmax_cross_entropy(
        t.leaf({2}, {rows[2 * r], rows[2 * r + 1]}), r == 0 ? 0 : 1));
  }
  CHECK(tape.scalar(batched) == doctest::Approx(mean / 3.0).epsilon(1e-13));
}

TEST_CASE("loss-term ops forward values") {
  Tape tape;
  CHECK(tape.scalar(tape.tv(tape.leaf({3}, {0, 1, 0}), 2.0)) ==
        doctest::Approx(2.0).epsilon(1e-15));
  CHECK(tape.scalar(tape.sm(tape.leaf({4}, {1, 4, 2, 2}))) ==
        doctest::Approx(5.0 / 3.0).epsilon(1e-15));
  CHECK(tape.scalar(tape.alpha_norm(tape.leaf({1}, {2.0}), 6.0)) ==
        doctest::Approx(64.0).epsilon(1e-15));
  CHECK(tape.scalar(tape.pick(tape.leaf({3}, {5, 7, 9}), 1)) == 7.0);
  CHECK_THROWS_AS(tape.tv(tape.leaf({1}, {1.0}), 2.0), Error);
  CHECK_THROWS_AS(tape.pick(tape.leaf({3}, {5, 7, 9}), 3), Error);
}

TEST_CASE("grad_check on analytic functions") {
  Tensor x({3}, {1.0, 2.0, 3.0});
  auto sum_sq = [](Tape& t, Tape::Id id) { return t.sum_sq(id); };
  CHECK(grad_check(sum_sq, x, 1e-6) < 1e-7);

  auto constant = [](Tape& t, Tape::Id id) { return t.scale(t.sum_sq(id), 0.0); };
  CHECK(grad_check(constant, x, 1e-6) == 0.0);
}

TEST_CASE("grad_check on the composite eval-mode network") {
  TinyNet net(16);
  Tensor x = randn_tensor({1, 16}, 202);
  auto f = [&net](Tape& t, Tape::Id id) { return net.loss(t, id); };
  CHECK(grad_check(f, x, 1e-6) < 1e-4);
}

TEST_CASE("two tapes over the same computation give bit-identical gradients") {
  TinyNet net(16);
  Tensor x = randn_tensor({1, 16}, 203);
  std::vector<double> g1, g2;
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    Tensor in = x;
    in.requires_grad = true;
    auto id = tape.leaf(in);
    tape.backward(net.loss(tape, id));
    (pass == 0 ? g1 : g2) = tape.grad(id);
  }
  REQUIRE(g1.size() == g2.size());
  for (size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("train-mode batchnorm updates running statistics") {
  Tape tape;
  // One channel, 4 values: batch mean 2.5, biased var 1.25, unbiased 5/3.
  auto x = tape.leaf({1, 4}, {1, 2, 3, 4});
  auto gamma = tape.leaf({1}, {1.0});
  auto beta = tape.leaf({1}, {0.0});
  BatchNormState state;
  state.running_mean = {0.0};
  state.running_var = {1.0};
  tape.batchnorm1d(x, gamma, beta, state, BnMode::train, 0.1);
  CHECK(state.running_mean[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(state.running_var[0] == doctest::Approx(0.9 + 0.1 * (1.25 * 4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("eval-mode batchnorm requires populated running statistics") {
  Tape tape;
  auto x = tape.leaf({1, 4}, {1, 2, 3, 4});
  auto gamma = tape.leaf({1}, {1.0});
  auto beta = tape.leaf({1}, {0.0});
  BatchNormState fresh;
  CHECK_THROWS_AS(tape.batchnorm1d(x, gamma, beta, fresh, BnMode::eval), Error);
}

TEST_CASE("eval-mode forward is a pure function of input and weights") {
  TinyNet net(16);
  Tensor x = randn_tensor({1, 16}, 204);
  Tape t1, t2;
  auto v1 = t1.scalar(net.loss(t1, t1.leaf(x)));
  auto v2 = t2.scalar(net.loss(t2, t2.leaf(x)));
  CHECK(v1 == v2);
}

TEST_CASE("shape mismatches raise shape errors naming both shapes") {
  Tape tape;
  auto x = tape.leaf({2, 8}, std::vector<double>(16, 0.0));
  auto w = tape.leaf({4, 3, 3}, std::vector<double>(36, 0.0));
  auto b = tape.leaf({4}, std::vector<double>(4, 0.0));
  try {
    tape.conv1d(x, w, b);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::shape);
    CHECK(std::string(e.what()).find("[2, 8]") != std::string::npos);
    CHECK(std::string(e.what()).find("[4, 3, 3]") != std::string::npos);
  }
}
