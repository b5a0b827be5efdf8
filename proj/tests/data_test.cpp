#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "bssgan/data.hpp"

using namespace bssgan;
namespace fs = std::filesystem;

TEST_CASE("bicubic resize basics") {
  // identity size returns the input untouched
  Tensor<float> img({4, 4, 3});
  Rng rng(1);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  auto same = bicubic_resize(img, 4, 4);
  CHECK(same.data == img.data);

  // constant interior stays constant away from the zero-padded border
  Tensor<float> flat({8, 8, 3}, 0.5f);
  auto up = bicubic_resize(flat, 16, 16);
  REQUIRE(up.shape == Shape{16, 16, 3});
  for (int y = 4; y < 12; ++y)
    for (int x = 4; x < 12; ++x)
      CHECK(up.data[(std::size_t(y) * 16 + x) * 3] == Catch::Approx(0.5).margin(1e-6));

  // kernel weights sum to 1 at any phase: downsample of a constant interior
  auto down = bicubic_resize(flat, 4, 4);
  CHECK(down.data[(1 * 4 + 1) * 3] == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("byte mapping endpoints: 0 -> -1, 255 -> +1") {
  CHECK(byte_to_unit(0) == -1.0f);
  CHECK(byte_to_unit(255) == 1.0f);
  CHECK(unit_to_byte(-1.0f) == 0);
  CHECK(unit_to_byte(1.0f) == 255);
  CHECK(unit_to_byte(-2.0f) == 0);   // clamped
  CHECK(unit_to_byte(2.0f) == 255);  // clamped
  // round trip is the identity on all byte values
  for (int b = 0; b < 256; ++b)
    CHECK(unit_to_byte(byte_to_unit(static_cast<unsigned char>(b))) == b);
}

TEST_CASE("png save/load round trip") {
  auto dir = fs::temp_directory_path() / "bssgan_data_io";
  fs::remove_all(dir);
  Rng rng(2);
  Tensor<float> img({16, 16, 3});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  save_image(dir / "a.png", img);
  Tensor<float> back;
  REQUIRE(load_image(dir / "a.png", back));
  REQUIRE(back.shape == img.shape);
  // 8-bit quantization: within half a step of 2/255
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(back.data[i] == Catch::Approx(img.data[i]).margin(1.0 / 255.0 + 1e-6));
  fs::remove_all(dir);
}

TEST_CASE("procedural dataset shape, counts and determinism") {
  auto ds = make_procedural({960, 60, 30}, 32, 7);
  CHECK(ds.index.counts() == std::vector<long>{960, 60, 30});
  CHECK(ds.records.size() == 1050);
  for (const auto& r : ds.records) {
    CHECK(r.pixels.shape == Shape{32, 32, 3});
    for (float v : r.pixels.data) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
  }
  auto ds2 = make_procedural({960, 60, 30}, 32, 7);
  for (std::size_t i = 0; i < ds.records.size(); ++i)
    CHECK(ds.records[i].pixels.data == ds2.records[i].pixels.data);
  auto ds3 = make_procedural({4, 4}, 32, 8);
  CHECK(ds3.records[0].pixels.data != ds.records[0].pixels.data);
}

TEST_CASE("crack tiles differ from plain texture only along dark pixels") {
  Rng a(99);
  Rng b(99);
  auto plain = detail::procedural_base(32, a);
  auto cracked = procedural_image(1, 32, b);
  int diff = 0;
  for (std::size_t i = 0; i < plain.data.size(); i += 3) {
    bool changed = plain.data[i] != cracked.data[i];
    if (changed) {
      ++diff;
      CHECK(cracked.data[i] < -0.45f);  // every changed pixel is crack-dark
    }
  }
  CHECK(diff > 0);
}

TEST_CASE("reference detector scores >= 95% on a 300-sample draw") {
  auto ds = make_procedural({100, 100, 100}, 32, 21);
  int correct = 0, total = 0;
  for (int cls = 0; cls < 3; ++cls)
    for (int id : ds.index.by_class[cls]) {
      ++total;
      if (classify_procedural(ds.records[id].pixels) == cls) ++correct;
    }
  REQUIRE(total == 300);
  CHECK(correct >= 285);
}

TEST_CASE("stratified 2:1 split reproduces the reference counts") {
  DatasetIndex idx;
  idx.k = 3;
  idx.image_size = 32;
  idx.class_names = {"0_ud", "1_cr", "2_sp"};
  int id = 0;
  for (long n : {14400L, 900L, 450L}) {
    std::vector<int> ids(n);
    for (auto& v : ids) v = id++;
    idx.by_class.push_back(std::move(ids));
  }
  auto [train, test] = make_split(idx, 3);
  CHECK(train.counts() == std::vector<long>{9600, 600, 300});
  CHECK(test.counts() == std::vector<long>{4800, 300, 150});
  // disjoint
  for (int cls = 0; cls < 3; ++cls) {
    std::set<int> tr(train.by_class[cls].begin(), train.by_class[cls].end());
    for (int tid : test.by_class[cls]) CHECK(tr.count(tid) == 0);
  }
  // deterministic per seed
  auto [train2, test2] = make_split(idx, 3);
  CHECK(train2.by_class == train.by_class);

  DatasetIndex tiny;
  tiny.k = 1;
  tiny.class_names = {"only"};
  tiny.by_class = {{0}};
  CHECK_THROWS_AS(make_split(tiny, 1), std::invalid_argument);
}

TEST_CASE("hybrid labeling hides the right amount of data") {
  DatasetIndex idx;
  idx.k = 2;
  idx.image_size = 32;
  idx.class_names = {"0_ud", "1_cr"};
  int id = 0;
  for (long n : {9600L, 600L}) {
    std::vector<int> ids(n);
    for (auto& v : ids) v = id++;
    idx.by_class.push_back(std::move(ids));
  }
  auto hy = make_hybrid(idx, 0.2, 5);
  CHECK(hy.counts() == std::vector<long>{1920, 120});
  CHECK(hy.total_labeled() == 2040);
  CHECK(hy.unlabeled.size() == 8160);
  hy.validate();

  auto full = make_hybrid(idx, 1.0, 5);
  CHECK(full.unlabeled.empty());
  CHECK(full.counts() == idx.counts());

  auto half = limit_unlabeled(hy, 0.5, 6);
  CHECK(half.unlabeled.size() == 4080);
  auto none = limit_unlabeled(hy, 0.0, 6);
  CHECK(none.unlabeled.empty());

  CHECK_THROWS_AS(make_hybrid(idx, 0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(make_hybrid(idx, 1.5, 5), std::invalid_argument);
}

TEST_CASE("write then ingest round-trips the dataset layout") {
  auto dir = fs::temp_directory_path() / "bssgan_layout";
  fs::remove_all(dir);
  auto ds = make_procedural({12, 6}, 32, 9);
  auto hy = make_hybrid(ds.index, 0.5, 4);
  write_split(ds, hy, dir / "train");
  auto back = ingest_dir(dir / "train", 32);
  CHECK(back.index.class_names == std::vector<std::string>{"0_ud", "1_cr"});
  CHECK(back.index.counts() == std::vector<long>{6, 3});
  CHECK(back.index.unlabeled.size() == 9);
  // every ingested record still classifies as its folder's class
  for (int cls = 0; cls < 2; ++cls)
    for (int rid : back.index.by_class[cls])
      CHECK(classify_procedural(back.records[rid].pixels) == cls);

  // undecodable files are skipped, not fatal
  std::ofstream(dir / "train" / "0_ud" / "junk.png") << "not an image";
  auto again = ingest_dir(dir / "train", 32);
  CHECK(again.index.counts() == std::vector<long>{6, 3});
  CHECK_THROWS_AS(ingest_dir(dir / "missing", 32), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("augmentation transforms keep shape, range and class identity") {
  auto ds = make_procedural({6, 6}, 32, 10);
  Rng rng(11);
  auto idx = oversample_da(undersample(ds.index, rng), DaConfig{}, rng);
  // flip-only duplicate equals the mirrored original
  Transform flip;
  flip.flip_h = true;
  auto orig = ds.records[0].pixels;
  auto flipped = apply_transform(orig, flip);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c)
        CHECK(flipped.data[(std::size_t(y) * 32 + x) * 3 + c] ==
              Catch::Approx(orig.data[(std::size_t(y) * 32 + 31 - x) * 3 + c]).margin(1e-6));

  // a rotated/translated crack still detects as a crack (modest angles)
  Transform t;
  t.dx = 2;
  t.dy = -1;
  t.rot_deg = 10;
  int ok = 0;
  for (int id : ds.index.by_class[1]) {
    auto img = apply_transform(ds.records[id].pixels, t);
    for (float v : img.data) {
      REQUIRE(v >= -1.0f);
      REQUIRE(v <= 1.0f);
    }
    if (classify_procedural(img) == 1) ++ok;
  }
  CHECK(ok >= 5);  // 6 crack tiles
}

TEST_CASE("gather_batch stacks pixels in id order") {
  auto ds = make_procedural({3, 3}, 16, 12);
  auto batch = gather_batch(ds, ds.index, {0, 4, 2});
  REQUIRE(batch.shape == Shape{3, 16, 16, 3});
  std::size_t per = 16 * 16 * 3;
  for (std::size_t i = 0; i < per; ++i) {
    CHECK(batch.data[i] == ds.records[0].pixels.data[i]);
    CHECK(batch.data[per + i] == ds.records[4].pixels.data[i]);
    CHECK(batch.data[2 * per + i] == ds.records[2].pixels.data[i]);
  }
}

TEST_CASE("tile_grid places samples row-major") {
  Tensor<float> batch({2, 2, 2, 3});
  for (std::size_t i = 0; i < batch.data.size(); ++i)
    batch.data[i] = static_cast<float>(i) / 100.0f;
  auto grid = tile_grid(batch, 2, 2);
  REQUIRE(grid.shape == Shape{4, 4, 3});
  // sample 1 occupies the top-right 2x2 block
  CHECK(grid.data[(0 * 4 + 2) * 3] == batch.data[1 * 12]);
  // empty cells are filled with -1
  CHECK(grid.data[(2 * 4 + 0) * 3] == -1.0f);
}
