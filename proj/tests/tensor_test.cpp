#include <catch2/catch_amalgamated.hpp>

#include "bssgan/adam.hpp"
#include "bssgan/ops.hpp"
#include "bssgan/tape.hpp"
#include "bssgan/tensor.hpp"

using namespace bssgan;

TEST_CASE("tensor data length always matches shape") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK_THROWS_AS(Tensor<float>({2, 0, 4}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1.f, 2.f, 3.f}),
                  std::invalid_argument);
}

TEST_CASE("backward of sum is all-ones") {
  Tape<float> tp;
  NodeId x = tp.variable(Tensor<float>({2, 3}, 2.5f), "x");
  auto grads = tp.backward(sum_all(tp, x));
  for (float g : grads.at("x").data) CHECK(g == 1.0f);
}

TEST_CASE("backward of squared norm doubles the input") {
  Tape<float> tp;
  NodeId w = tp.variable(Tensor<float>({2}, {1.f, 2.f}), "w");
  auto grads = tp.backward(sq_sum(tp, w));
  CHECK(grads.at("w").data[0] == Catch::Approx(2.0));
  CHECK(grads.at("w").data[1] == Catch::Approx(4.0));
}

TEST_CASE("backward twice on one tape is a usage error") {
  Tape<float> tp;
  NodeId x = tp.variable(Tensor<float>({2}, 1.f), "x");
  NodeId loss = sum_all(tp, x);
  tp.backward(loss);
  CHECK_THROWS_AS(tp.backward(loss), std::logic_error);
}

TEST_CASE("backward requires a scalar loss") {
  Tape<float> tp;
  NodeId x = tp.variable(Tensor<float>({3}, 1.f), "x");
  CHECK_THROWS_AS(tp.backward(x), std::invalid_argument);
}

TEST_CASE("gradients accumulate additively at fan-out") {
  Tape<float> tp;
  NodeId x = tp.variable(Tensor<float>({2}, {3.f, 4.f}), "x");
  // loss = sum(x) + sum(x) -> grad 2 everywhere
  NodeId loss = add(tp, sum_all(tp, x), sum_all(tp, x));
  auto grads = tp.backward(loss);
  for (float g : grads.at("x").data) CHECK(g == 2.0f);
}

TEST_CASE("unreachable parameters get zero gradients") {
  Tape<float> tp;
  NodeId x = tp.variable(Tensor<float>({2}, 1.f), "x");
  tp.variable(Tensor<float>({3}, 1.f), "unused");
  auto grads = tp.backward(sum_all(tp, x));
  REQUIRE(grads.count("unused") == 1);
  for (float g : grads.at("unused").data) CHECK(g == 0.0f);
}

namespace {
struct Single {
  Tensor<float> p{Shape{1}, 0.f};
  Tensor<float>& at(const std::string&) { return p; }
};
}  // namespace

TEST_CASE("adam leaves parameters alone under zero gradients") {
  Single params;
  params.p.data[0] = 0.7f;
  AdamState<float> st;
  std::map<std::string, Tensor<float>> grads{{"p", Tensor<float>({1}, 0.f)}};
  adam_step(params, grads, st, 0.1f);
  CHECK(params.p.data[0] == 0.7f);
  CHECK(st.t == 1);
}

TEST_CASE("adam first step moves by ~lr against the gradient sign") {
  // Bias correction makes mhat = g and vhat = g*g at t=1, so the update is
  // lr * g / (|g| + eps).
  Single params;
  params.p.data[0] = 1.0f;
  AdamState<float> st;
  std::map<std::string, Tensor<float>> grads{{"p", Tensor<float>({1}, 0.5f)}};
  adam_step(params, grads, st, 0.1f);
  CHECK(params.p.data[0] == Catch::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-5));
}

TEST_CASE("adam two-step hand unroll") {
  // Identical scalar gradient 1.0 at both steps, lr 0.1.
  double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.1, p = 0.0;
  double m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * 1.0;
    v = b2 * v + (1 - b2) * 1.0;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    p -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  Single params;
  AdamState<float> st;
  std::map<std::string, Tensor<float>> grads{{"p", Tensor<float>({1}, 1.f)}};
  adam_step(params, grads, st, 0.1f);
  adam_step(params, grads, st, 0.1f);
  CHECK(st.t == 2);
  CHECK(params.p.data[0] == Catch::Approx(p).epsilon(1e-4));
}

TEST_CASE("adam aborts on NaN gradients without touching parameters") {
  Single params;
  params.p.data[0] = 0.3f;
  AdamState<float> st;
  std::map<std::string, Tensor<float>> grads{
      {"p", Tensor<float>({1}, std::numeric_limits<float>::quiet_NaN())}};
  CHECK_THROWS_AS(adam_step(params, grads, st, 0.1f), NanGradientError);
  CHECK(params.p.data[0] == 0.3f);
  CHECK(st.t == 0);
}
