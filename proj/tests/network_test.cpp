#include <catch2/catch_amalgamated.hpp>

#include "bssgan/checkpoint.hpp"
#include "bssgan/network.hpp"

using namespace bssgan;

namespace {

Tensor<float> noise(int n, int dim, Rng& rng) {
  Tensor<float> z({n, dim});
  for (auto& v : z.data) v = static_cast<float>(rng.normal());
  return z;
}

Tensor<float> image_batch(int n, int side, Rng& rng) {
  Tensor<float> x({n, side, side, 3});
  for (auto& v : x.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return x;
}

}  // namespace

TEST_CASE("discriminator output width is K+1 semi-supervised, K plain") {
  CHECK(discriminator_spec(2, true).output_dim == 3);
  CHECK(discriminator_spec(2, false).output_dim == 2);
  CHECK(discriminator_spec(3, true).output_dim == 4);
  CHECK_THROWS_AS(discriminator_spec(1, true), std::invalid_argument);
}

TEST_CASE("discriminator parameter shapes walk the layer stack at 128") {
  auto spec = discriminator_spec(2, true, 128);
  Rng rng(1);
  auto ps = init_xavier<float>(spec, rng);
  CHECK(ps.at("conv1/w").shape == Shape{3, 3, 3, 32});
  CHECK(ps.at("conv2/w").shape == Shape{3, 3, 32, 64});
  CHECK(ps.at("bn1/gamma").shape == Shape{64});
  CHECK(ps.at("conv3/w").shape == Shape{3, 3, 64, 64});
  // 128 -> 64 -> 32 spatial, 32*32*64 = 65536 flattened
  CHECK(ps.at("fc/w").shape == Shape{65536, 3});
  CHECK(ps.at("fc/b").shape == Shape{3});
}

TEST_CASE("discriminator forward yields probability rows") {
  for (int side : {32, 64}) {
    auto spec = discriminator_spec(2, true, side);
    Rng rng(2);
    auto ps = init_xavier<float>(spec, rng);
    Tape<float> tp;
    NodeId x = tp.constant(image_batch(5, side, rng));
    auto res = forward(tp, spec, ps, x, Mode::kInfer, rng);
    const auto& p = tp.value(res.out);
    REQUIRE(p.shape == Shape{5, 3});
    for (int r = 0; r < 5; ++r) {
      double sum = 0;
      for (int j = 0; j < 3; ++j) {
        CHECK(p.data[r * 3 + j] >= 0.0f);
        sum += p.data[r * 3 + j];
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-5));
    }
  }
}

TEST_CASE("feature width is 65536 at 128 input and scales with size") {
  auto spec128 = discriminator_spec(2, true, 128);
  Rng rng(3);
  auto ps128 = init_xavier<float>(spec128, rng);
  auto f = discriminator_features(spec128, ps128, image_batch(2, 128, rng));
  CHECK(f.shape == Shape{2, 65536});
  for (float v : f.data) CHECK(v >= 0.0f);

  auto spec32 = discriminator_spec(2, true, 32);
  auto ps32 = init_xavier<float>(spec32, rng);
  auto f32 = discriminator_features(spec32, ps32, image_batch(2, 32, rng));
  CHECK(f32.shape == Shape{2, 4096});
}

TEST_CASE("features are deterministic with dropout off") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(4);
  auto ps = init_xavier<float>(spec, rng);
  auto x = image_batch(3, 32, rng);
  auto a = discriminator_features(spec, ps, x);
  auto b = discriminator_features(spec, ps, x);
  CHECK(a.data == b.data);
}

TEST_CASE("generator dense width is 131072 at 128 and scales to 8192 at 32") {
  auto g128 = generator_spec(128);
  Rng rng(5);
  auto ps = init_xavier<float>(g128, rng);
  CHECK(ps.at("fc/w").shape == Shape{100, 131072});
  CHECK(ps.at("deconv1/w").shape == Shape{3, 3, 64, 128});
  CHECK(ps.at("deconv2/w").shape == Shape{3, 3, 3, 64});
  CHECK(ps.at("deconv3/w").shape == Shape{3, 3, 3, 3});

  auto g32 = generator_spec(32);
  auto ps32 = init_xavier<float>(g32, rng);
  CHECK(ps32.at("fc/w").shape == Shape{100, 8192});  // 8*8*128
  CHECK_THROWS_AS(generator_spec(30), std::invalid_argument);
}

TEST_CASE("generator output is (N, out, out, 3) within [-1, 1]") {
  auto spec = generator_spec(32);
  Rng rng(6);
  auto ps = init_xavier<float>(spec, rng);
  Tape<float> tp;
  NodeId z = tp.constant(noise(4, 100, rng));
  auto res = forward(tp, spec, ps, z, Mode::kTrain, rng);
  const auto& img = tp.value(res.out);
  REQUIRE(img.shape == Shape{4, 32, 32, 3});
  for (float v : img.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("xavier init respects the fan bound, zero biases, unit gamma") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(7);
  auto ps = init_xavier<float>(spec, rng);
  // conv1: fan_in = 3*3*3 = 27, fan_out = 3*3*32 = 288
  double bound = std::sqrt(6.0 / (27 + 288));
  for (float v : ps.at("conv1/w").data) CHECK(std::abs(v) <= bound);
  for (float v : ps.at("conv1/b").data) CHECK(v == 0.0f);
  for (float v : ps.at("fc/b").data) CHECK(v == 0.0f);
  for (float v : ps.at("bn1/gamma").data) CHECK(v == 1.0f);
  for (float v : ps.at("bn1/beta").data) CHECK(v == 0.0f);
  for (float v : ps.at("running/bn1/mean").data) CHECK(v == 0.0f);
  for (float v : ps.at("running/bn1/var").data) CHECK(v == 1.0f);

  Rng other(8);
  auto ps2 = init_xavier<float>(spec, other);
  CHECK(ps.at("conv1/w").data != ps2.at("conv1/w").data);
}

TEST_CASE("running stats are excluded from the trainable set") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(9);
  auto ps = init_xavier<float>(spec, rng);
  for (const auto& n : ps.trainable()) CHECK(n.rfind("running/", 0) != 0);
  CHECK(ps.contains("running/bn1/mean"));
}

TEST_CASE("checkpoint round-trips parameters and optimizer state exactly") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(10);
  auto ps = init_xavier<float>(spec, rng);

  AdamState<float> st;
  std::map<std::string, Tensor<float>> grads;
  for (const auto& n : ps.trainable()) {
    Tensor<float> g(ps.at(n).shape);
    for (auto& v : g.data) v = static_cast<float>(0.01 * rng.normal());
    grads.emplace(n, std::move(g));
  }
  adam_step(ps, grads, st, 2e-5f);

  auto dir = std::filesystem::temp_directory_path() / "bssgan_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, ps, spec.fingerprint(), &st);
  auto ck = load_checkpoint(dir);

  CHECK(ck.fingerprint == spec.fingerprint());
  REQUIRE(ck.params.names() == ps.names());
  for (const auto& n : ps.names()) {
    CHECK(ck.params.at(n).shape == ps.at(n).shape);
    CHECK(ck.params.at(n).data == ps.at(n).data);
  }
  REQUIRE(ck.has_opt);
  CHECK(ck.opt.t == 1);
  for (const auto& [name, m] : st.m) CHECK(ck.opt.m.at(name).data == m.data);
  for (const auto& [name, v] : st.v) CHECK(ck.opt.v.at(name).data == v.data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("loading a checkpoint for a different layout is rejected") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(11);
  auto ps = init_xavier<float>(spec, rng);
  auto dir = std::filesystem::temp_directory_path() / "bssgan_ckpt_mismatch";
  std::filesystem::remove_all(dir);
  save_checkpoint(dir, ps, spec.fingerprint());

  CHECK_NOTHROW(load_params_checked(dir, spec));
  CHECK_THROWS_AS(load_params_checked(dir, discriminator_spec(3, true, 32)),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_checkpoint(dir / "nope"), std::invalid_argument);
  std::filesystem::remove_all(dir);
}

TEST_CASE("predictions ignore the synthetic column") {
  auto spec = discriminator_spec(2, true, 32);
  Rng rng(12);
  auto ps = init_xavier<float>(spec, rng);
  auto y = predict(spec, ps, image_batch(6, 32, rng), 2);
  for (int v : y) {
    CHECK(v >= 0);
    CHECK(v < 2);
  }
}
