#include <catch2/catch_amalgamated.hpp>

#include "bssgan/ops.hpp"
#include "bssgan/rng.hpp"

using namespace bssgan;

namespace {

template <class T>
Tensor<T> random_tensor(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d: stride-2 same padding halves the spatial side") {
  Tape<float> tp;
  Rng rng(1);
  NodeId x = tp.constant(random_tensor<float>({2, 128, 128, 3}, rng));
  NodeId w = tp.constant(random_tensor<float>({3, 3, 3, 32}, rng));
  NodeId b = tp.constant(Tensor<float>({32}, 0.f));
  NodeId y = conv2d(tp, x, w, b, 2);
  CHECK(tp.value(y).shape == Shape{2, 64, 64, 32});
}

TEST_CASE("conv2d: center-delta kernel is the identity") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 1, 1, 1}, {0.37f}));
  Tensor<float> k({3, 3, 1, 1}, 0.f);
  k.data[4] = 1.f;  // (ky=1, kx=1)
  NodeId y = conv2d(tp, x, tp.constant(std::move(k)), tp.constant(Tensor<float>({1}, 0.f)), 1);
  CHECK(tp.value(y).data[0] == Catch::Approx(0.37f));
}

TEST_CASE("conv2d: all-ones kernel over a 2x2 input sums the zero-padded patch") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 2, 2, 1}, {1.f, 2.f, 3.f, 4.f}));
  NodeId y = conv2d(tp, x, tp.constant(Tensor<float>({3, 3, 1, 1}, 1.f)),
                    tp.constant(Tensor<float>({1}, 0.f)), 1);
  REQUIRE(tp.value(y).shape == Shape{1, 2, 2, 1});
  for (float v : tp.value(y).data) CHECK(v == Catch::Approx(10.f));
}

TEST_CASE("conv2d: channel mismatch is a configuration error") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 4, 4, 3}, 0.f));
  NodeId w = tp.constant(Tensor<float>({3, 3, 2, 8}, 0.f));
  NodeId b = tp.constant(Tensor<float>({8}, 0.f));
  CHECK_THROWS_AS(conv2d(tp, x, w, b, 1), std::invalid_argument);
}

TEST_CASE("transposed_conv2d: stride-2 doubles the spatial side per the generator table") {
  Tape<float> tp;
  Rng rng(2);
  NodeId x = tp.constant(random_tensor<float>({1, 32, 32, 128}, rng));
  NodeId w = tp.constant(random_tensor<float>({3, 3, 64, 128}, rng, -0.05, 0.05));
  NodeId b = tp.constant(Tensor<float>({64}, 0.f));
  NodeId y = transposed_conv2d(tp, x, w, b, 2);
  CHECK(tp.value(y).shape == Shape{1, 64, 64, 64});
}

TEST_CASE("transposed_conv2d: zero input yields all-bias output") {
  Tape<float> tp;
  Rng rng(3);
  NodeId x = tp.constant(Tensor<float>({2, 4, 4, 5}, 0.f));
  NodeId w = tp.constant(random_tensor<float>({3, 3, 7, 5}, rng));
  NodeId b = tp.constant(Tensor<float>({7}, {1, 2, 3, 4, 5, 6, 7}));
  NodeId y = transposed_conv2d(tp, x, w, b, 2);
  const Tensor<float>& yv = tp.value(y);
  REQUIRE(yv.shape == Shape{2, 8, 8, 7});
  for (std::size_t i = 0; i < yv.numel(); ++i)
    CHECK(yv.data[i] == Catch::Approx(float(i % 7 + 1)));
}

TEST_CASE("transposed_conv2d rejects unsupported strides") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 4, 4, 2}, 0.f));
  NodeId w = tp.constant(Tensor<float>({3, 3, 2, 2}, 0.f));
  NodeId b = tp.constant(Tensor<float>({2}, 0.f));
  CHECK_THROWS_AS(transposed_conv2d(tp, x, w, b, 3), std::invalid_argument);
}

TEST_CASE("transposed_conv2d is the adjoint of conv2d") {
  // <conv(x,k), y> == <x, deconv(y,k)> for both strides.
  Rng rng(4);
  for (int stride : {1, 2}) {
    for (int rep = 0; rep < 10; ++rep) {
      Tape<float> tp;
      Tensor<float> xt = random_tensor<float>({1, 4, 4, 1}, rng);
      Tensor<float> kt = random_tensor<float>({3, 3, 1, 2}, rng);
      NodeId zero1 = tp.constant(Tensor<float>({2}, 0.f));
      NodeId zero2 = tp.constant(Tensor<float>({1}, 0.f));
      NodeId cx = conv2d(tp, tp.constant(xt), tp.constant(kt), zero1, stride);
      Tensor<float> yt = random_tensor<float>(tp.value(cx).shape, rng);
      NodeId dy = transposed_conv2d(tp, tp.constant(yt), tp.constant(kt), zero2, stride);
      float lhs = dot(tp.value(cx), yt);
      float rhs = dot(xt, tp.value(dy));
      CHECK(std::abs(lhs - rhs) < 1e-4);
    }
  }
}

TEST_CASE("dense: identity weights pass the input through") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 2}, {1.f, 2.f}));
  NodeId w = tp.constant(Tensor<float>({2, 2}, {1.f, 0.f, 0.f, 1.f}));
  SECTION("zero bias") {
    NodeId y = dense(tp, x, w, tp.constant(Tensor<float>({2}, 0.f)));
    CHECK(tp.value(y).data == std::vector<float>{1.f, 2.f});
  }
  SECTION("hand matmul with bias") {
    NodeId y = dense(tp, x, w, tp.constant(Tensor<float>({2}, 3.f)));
    CHECK(tp.value(y).data == std::vector<float>{4.f, 5.f});
  }
}

TEST_CASE("dense: dimension mismatch is a configuration error") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 3}, 0.f));
  NodeId w = tp.constant(Tensor<float>({2, 2}, 0.f));
  NodeId b = tp.constant(Tensor<float>({2}, 0.f));
  CHECK_THROWS_AS(dense(tp, x, w, b), std::invalid_argument);
}

TEST_CASE("batch_norm train mode normalizes to zero mean, unit variance") {
  Tape<float> tp;
  Rng rng(5);
  NodeId x = tp.constant(random_tensor<float>({4, 6, 6, 3}, rng, -3, 5));
  NodeId gamma = tp.constant(Tensor<float>({3}, 1.f));
  NodeId beta = tp.constant(Tensor<float>({3}, 0.f));
  NodeId y = batch_norm(tp, x, gamma, beta, BnRunning<float>{}, 0.8f, Mode::kTrain);
  const Tensor<float>& yv = tp.value(y);
  for (int c = 0; c < 3; ++c) {
    double mean = 0, var = 0;
    std::size_t rows = yv.numel() / 3;
    for (std::size_t r = 0; r < rows; ++r) mean += yv.data[r * 3 + c];
    mean /= double(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      double d = yv.data[r * 3 + c] - mean;
      var += d * d;
    }
    var /= double(rows);
    CHECK(std::abs(mean) < 1e-3);
    CHECK(var == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("batch_norm: constant channel collapses to beta") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({3, 2, 2, 1}, 4.2f));
  NodeId gamma = tp.constant(Tensor<float>({1}, 2.f));
  NodeId beta = tp.constant(Tensor<float>({1}, 0.25f));
  NodeId y = batch_norm(tp, x, gamma, beta, BnRunning<float>{}, 0.8f, Mode::kTrain);
  for (float v : tp.value(y).data) CHECK(v == Catch::Approx(0.25f).margin(1e-3));
}

TEST_CASE("batch_norm running mean follows the unrolled EMA") {
  Tensor<float> rm({1}, 0.f), rv({1}, 1.f);
  BnRunning<float> run{&rm, &rv};
  auto feed = [&](float value) {
    Tape<float> tp;
    NodeId x = tp.constant(Tensor<float>({4, 1, 1, 1}, value));
    batch_norm(tp, x, tp.constant(Tensor<float>({1}, 1.f)),
               tp.constant(Tensor<float>({1}, 0.f)), run, 0.8f, Mode::kTrain);
  };
  float m1 = 2.0f, m2 = -1.0f;
  feed(m1);
  feed(m2);
  CHECK(rm.data[0] == Catch::Approx(0.8 * (0.8 * 0.0 + 0.2 * m1) + 0.2 * m2));
}

TEST_CASE("batch_norm inference uses running statistics") {
  Tensor<float> rm({1}, 1.f), rv({1}, 4.f);
  BnRunning<float> run{&rm, &rv};
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1, 1, 1, 1}, 3.f));
  NodeId y = batch_norm(tp, x, tp.constant(Tensor<float>({1}, 1.f)),
                        tp.constant(Tensor<float>({1}, 0.f)), run, 0.8f, Mode::kInfer);
  CHECK(tp.value(y).data[0] == Catch::Approx((3.0 - 1.0) / std::sqrt(4.0 + kBnEps)));
  CHECK(rm.data[0] == 1.f);  // inference never touches running stats
}

TEST_CASE("dropout: rate 0 and inference mode are the identity") {
  Rng rng(6);
  Tape<float> tp;
  Tensor<float> xt = random_tensor<float>({5, 7}, rng);
  NodeId a = dropout(tp, tp.constant(xt), 0.0, Mode::kTrain, rng);
  NodeId b = dropout(tp, tp.constant(xt), 0.25, Mode::kInfer, rng);
  CHECK(tp.value(a).data == xt.data);
  CHECK(tp.value(b).data == xt.data);
}

TEST_CASE("dropout keeps ~75% of elements at rate 0.25") {
  Rng rng(7);
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({1000, 1000}, 1.f));
  NodeId y = dropout(tp, x, 0.25, Mode::kTrain, rng);
  std::size_t kept = 0;
  for (float v : tp.value(y).data) kept += v != 0.f;
  double frac = double(kept) / 1e6;
  CHECK(frac == Catch::Approx(0.75).margin(0.005));
  // survivors scaled by 1/(1-rate)
  for (float v : tp.value(y).data) CHECK((v == 0.f || v == Catch::Approx(1.0 / 0.75)));
}

TEST_CASE("activation values match their definitions") {
  Tape<float> tp;
  NodeId x = tp.constant(Tensor<float>({3}, {-1.f, 0.f, 2.f}));
  CHECK(tp.value(leaky_relu(tp, x, 0.2f)).data == std::vector<float>{-0.2f, 0.f, 2.f});
  CHECK(tp.value(relu(tp, x)).data == std::vector<float>{0.f, 0.f, 2.f});
  CHECK(tp.value(tanh_act(tp, x)).data[1] == 0.f);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tape<float> tp;
  NodeId y = softmax(tp, tp.constant(Tensor<float>({1, 3}, 0.f)));
  for (float v : tp.value(y).data) CHECK(v == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("softmax rows are non-negative and sum to one") {
  Rng rng(8);
  Tape<float> tp;
  NodeId y = softmax(tp, tp.constant(random_tensor<float>({50, 11}, rng, -30, 30)));
  const Tensor<float>& yv = tp.value(y);
  for (int r = 0; r < 50; ++r) {
    double s = 0;
    for (int c = 0; c < 11; ++c) {
      CHECK(yv.data[r * 11 + c] >= 0.f);
      s += yv.data[r * 11 + c];
    }
    CHECK(s == Catch::Approx(1.0).margin(1e-5));
  }
}

TEST_CASE("tanh output stays in [-1,1]") {
  Rng rng(9);
  Tape<float> tp;
  NodeId y = tanh_act(tp, tp.constant(random_tensor<float>({100}, rng, -50, 50)));
  for (float v : tp.value(y).data) {
    CHECK(v >= -1.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("forward and backward are bitwise deterministic per seed") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape<float> tp;
    NodeId x = tp.variable(random_tensor<float>({2, 8, 8, 3}, rng), "x");
    NodeId w = tp.variable(random_tensor<float>({3, 3, 3, 4}, rng, -0.3, 0.3), "w");
    NodeId b = tp.variable(Tensor<float>({4}, 0.f), "b");
    NodeId h = leaky_relu(tp, conv2d(tp, x, w, b, 2), 0.2f);
    h = dropout(tp, h, 0.25, Mode::kTrain, rng);
    NodeId loss = mean_all(tp, mul(tp, h, h));
    auto grads = tp.backward(loss);
    std::vector<float> out = tp.value(loss).data;
    for (auto& [k, g] : grads) out.insert(out.end(), g.data.begin(), g.data.end());
    return out;
  };
  CHECK(run(42) == run(42));
  CHECK(run(42) != run(43));
}
