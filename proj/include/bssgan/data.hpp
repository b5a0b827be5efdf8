#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "bssgan/checkpoint.hpp"
#include "bssgan/image_io.hpp"
#include "bssgan/network.hpp"
#include "bssgan/rng.hpp"
#include "bssgan/sampling.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

struct ImageRecord {
  int label = -1;               // -1 = unlabeled
  Tensor<float> pixels{Shape{1, 1, 3}, 0.f};  // (S, S, 3) in [-1, 1]
  std::string source;           // "file:...", "procedural", "synthetic-gan"
};

/// Record store plus the index over it; record position is the sample id.
struct Dataset {
  DatasetIndex index;
  std::vector<ImageRecord> records;
};

/// Geometric augmentation: flip, rotate about the center, translate.
/// Nearest-neighbor sampling with reflected edges so thin dark features keep
/// their intensity instead of being blended into the background.
inline Tensor<float> apply_transform(const Tensor<float>& img, const Transform& t) {
  if (t.identity()) return img;
  int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    return i;
  };
  double th = t.rot_deg * 3.14159265358979323846 / 180.0;
  double cs = std::cos(th), sn = std::sin(th);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  Tensor<float> out(img.shape);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // invert translate, then rotation, then flip
      double xs = x - t.dx, ys = y - t.dy;
      double rx = cs * (xs - cx) + sn * (ys - cy) + cx;
      double ry = -sn * (xs - cx) + cs * (ys - cy) + cy;
      if (t.flip_h) rx = w - 1 - rx;
      int sx = reflect(static_cast<int>(std::lround(rx)), w);
      int sy = reflect(static_cast<int>(std::lround(ry)), h);
      for (int ch = 0; ch < c; ++ch)
        out.data[(std::size_t(y) * w + x) * c + ch] =
            img.data[(std::size_t(sy) * w + sx) * c + ch];
    }
  return out;
}

/// Pixels for an id under a (possibly augmented) index view of the store.
inline Tensor<float> load_pixels(const Dataset& ds, const DatasetIndex& idx, int id) {
  auto it = idx.augmented.find(id);
  if (it != idx.augmented.end())
    return apply_transform(ds.records.at(it->second.first).pixels, it->second.second);
  return ds.records.at(id).pixels;
}

/// Stacks ids into an (N, S, S, 3) batch tensor.
inline Tensor<float> gather_batch(const Dataset& ds, const DatasetIndex& idx,
                                  const std::vector<int>& ids) {
  check(!ids.empty(), "gather_batch on an empty id list");
  Tensor<float> first = load_pixels(ds, idx, ids[0]);
  int s = first.dim(0), c = first.dim(2);
  Tensor<float> out({static_cast<int>(ids.size()), s, s, c});
  std::size_t per = first.numel();
  std::copy(first.data.begin(), first.data.end(), out.data.begin());
  for (std::size_t i = 1; i < ids.size(); ++i) {
    Tensor<float> t = load_pixels(ds, idx, ids[i]);
    check(t.numel() == per, "inconsistent image sizes in batch");
    std::copy(t.data.begin(), t.data.end(), out.data.begin() + i * per);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Procedural dataset
// ---------------------------------------------------------------------------

namespace detail {

/// Smooth speckled background texture: coarse noise grid, bilinear upsample,
/// mid-grey base with a slight per-channel tint. Values stay well above the
/// dark-pixel band.
inline Tensor<float> procedural_base(int s, Rng& rng) {
  int g = std::max(2, s / 4) + 1;
  std::vector<double> grid(std::size_t(g) * g);
  for (auto& v : grid) v = rng.uniform(-1.0, 1.0);
  double base = rng.uniform(0.1, 0.5);
  double tint[3] = {rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03),
                    rng.uniform(-0.03, 0.03)};
  Tensor<float> img({s, s, 3});
  double scale = static_cast<double>(g - 1) / s;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double gy = y * scale, gx = x * scale;
      int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
      double fy = gy - y0, fx = gx - x0;
      int y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
      double n = (1 - fy) * ((1 - fx) * grid[y0 * g + x0] + fx * grid[y0 * g + x1]) +
                 fy * ((1 - fx) * grid[y1 * g + x0] + fx * grid[y1 * g + x1]);
      double v = base + 0.25 * n;
      for (int c = 0; c < 3; ++c)
        img.data[(std::size_t(y) * s + x) * 3 + c] =
            static_cast<float>(std::clamp(v + tint[c], -0.2, 0.95));
    }
  return img;
}

inline void darken(Tensor<float>& img, int y, int x, Rng& rng, double lo = -0.95,
                   double hi = -0.7) {
  int s = img.dim(0);
  if (y < 0 || y >= s || x < 0 || x >= s) return;
  float v = static_cast<float>(rng.uniform(lo, hi));
  for (int c = 0; c < 3; ++c) img.data[(std::size_t(y) * s + x) * 3 + c] = v;
}

/// Dark 1-3 px jittered polyline crossing the whole tile. Contrast, width and
/// continuity vary per tile so the class needs more than a couple of labeled
/// examples to pin down.
inline void add_crack(Tensor<float>& img, Rng& rng) {
  int s = img.dim(0);
  int width = 1 + static_cast<int>(rng.below(2));
  bool vertical = rng.below(2) == 1;
  double depth = rng.uniform(-0.72, -0.52);     // per-tile crack darkness
  double gap_rate = rng.uniform(0.0, 0.4);      // dashed-crack fraction
  double pos = rng.uniform(0.2 * s, 0.8 * s);
  for (int i = 0; i < s; ++i) {
    int p = static_cast<int>(pos);
    bool gap = rng.uniform() < gap_rate && i > 0 && i < s - 1;
    for (int wv = 0; wv < width; ++wv) {
      if (!gap) {
        if (vertical)
          darken(img, i, p + wv, rng, depth - 0.05, depth + 0.05);
        else
          darken(img, p + wv, i, rng, depth - 0.05, depth + 0.05);
      }
    }
    pos = std::clamp(pos + rng.uniform(-1.5, 1.5), 1.0, s - width - 1.0);
  }
}

/// Dark compact region grown by a random walk with a 3x3 stamp, confined to
/// the central part of the tile so it never spans a full side.
inline void add_blob(Tensor<float>& img, Rng& rng) {
  int s = img.dim(0);
  double target = rng.uniform(0.06, 0.12) * s * s;
  int lo = static_cast<int>(0.25 * s), hi = static_cast<int>(0.75 * s);
  int y = (lo + hi) / 2, x = (lo + hi) / 2;
  std::vector<char> marked(std::size_t(s) * s, 0);
  int area = 0;
  while (area < target) {
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        int yy = y + dy, xx = x + dx;
        if (yy < lo || yy > hi || xx < lo || xx > hi) continue;
        if (!marked[std::size_t(yy) * s + xx]) {
          marked[std::size_t(yy) * s + xx] = 1;
          ++area;
          darken(img, yy, xx, rng);
        }
      }
    int dir = static_cast<int>(rng.below(4));
    y = std::clamp(y + (dir == 0) - (dir == 1), lo, hi);
    x = std::clamp(x + (dir == 2) - (dir == 3), lo, hi);
  }
}

/// Short dark dash on an undamaged tile. Stays under the dark-pixel budget
/// that separates class 0 from the damage classes, but shares the cracks'
/// local appearance, so telling the classes apart requires integrating
/// extent across the whole tile rather than spotting any dark pixel.
inline void add_dash(Tensor<float>& img, Rng& rng) {
  int s = img.dim(0);
  int len = 4 + static_cast<int>(rng.below(4));  // 4-7 px < 1% of a 32x32 tile
  bool vertical = rng.below(2) == 1;
  double depth = rng.uniform(-0.72, -0.52);
  double pos = rng.uniform(0.15 * s, 0.85 * s);
  int start = static_cast<int>(rng.uniform(0.1 * s, 0.9 * s - len));
  for (int i = 0; i < len; ++i) {
    int p = static_cast<int>(pos);
    if (vertical)
      darken(img, start + i, p, rng, depth - 0.05, depth + 0.05);
    else
      darken(img, p, start + i, rng, depth - 0.05, depth + 0.05);
    pos = std::clamp(pos + rng.uniform(-1.5, 1.5), 1.0, s - 2.0);
  }
}

}  // namespace detail

inline const std::vector<std::string> kProceduralClasses{"0_ud", "1_cr", "2_sp"};

/// One procedural tile: class 0 plain texture, class 1 texture + crack line,
/// class 2 texture + spall blob.
inline Tensor<float> procedural_image(int cls, int s, Rng& rng) {
  check(cls >= 0 && cls <= 2, "procedural classes are 0..2");
  Tensor<float> img = detail::procedural_base(s, rng);
  if (cls == 0 && rng.uniform() < 0.5) detail::add_dash(img, rng);
  if (cls == 1) detail::add_crack(img, rng);
  if (cls == 2) detail::add_blob(img, rng);
  return img;
}

/// Hand-coded reference detector for procedural tiles; guards against
/// degenerate generation. Dark = mean channel below -0.45; cracks span a full
/// side, blobs stay compact.
inline int classify_procedural(const Tensor<float>& img) {
  int s = img.dim(0);
  int dark = 0, ymin = s, ymax = -1, xmin = s, xmax = -1;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      std::size_t base = (std::size_t(y) * s + x) * 3;
      float m = (img.data[base] + img.data[base + 1] + img.data[base + 2]) / 3.0f;
      if (m < -0.45f) {
        ++dark;
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
      }
    }
  if (dark < 0.01 * s * s) return 0;
  int extent = std::max(ymax - ymin + 1, xmax - xmin + 1);
  return extent >= static_cast<int>(0.85 * s) ? 1 : 2;
}

/// Deterministic in-memory dataset: counts[0] plain, counts[1] cracked,
/// counts[2] (optional) spalled tiles at side S.
inline Dataset make_procedural(const std::vector<long>& counts, int s, std::uint64_t seed) {
  check(counts.size() >= 2 && counts.size() <= 3, "procedural sets have 2 or 3 classes");
  for (long n : counts) check(n > 0, "every class needs at least one sample");
  Dataset ds;
  ds.index.k = static_cast<int>(counts.size());
  ds.index.image_size = s;
  Rng master(seed);
  int id = 0;
  for (int cls = 0; cls < ds.index.k; ++cls) {
    ds.index.class_names.push_back(kProceduralClasses[cls]);
    std::vector<int> ids;
    for (long i = 0; i < counts[cls]; ++i) {
      Rng r = master.fork(static_cast<std::uint64_t>(id));
      ds.records.push_back({cls, procedural_image(cls, s, r), "procedural"});
      ids.push_back(id++);
    }
    ds.index.by_class.push_back(std::move(ids));
  }
  ds.index.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Stratified, disjoint, ratio-preserving split (default 2:1 train:test).
inline std::pair<DatasetIndex, DatasetIndex> make_split(const DatasetIndex& index,
                                                        std::uint64_t seed,
                                                        double train_fraction = 2.0 / 3.0) {
  check(train_fraction > 0.0 && train_fraction < 1.0, "train fraction must be in (0,1)");
  DatasetIndex train = index, test = index;
  train.by_class.clear();
  test.by_class.clear();
  train.unlabeled.clear();
  test.unlabeled.clear();
  Rng rng(seed);
  for (int cls = 0; cls < index.k; ++cls) {
    std::vector<int> ids = index.by_class[cls];
    for (std::size_t i = 0; i + 1 < ids.size(); ++i)
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
    long n_train = std::lround(train_fraction * static_cast<double>(ids.size()));
    check(n_train >= 1 && n_train < static_cast<long>(ids.size()),
          "class " + index.class_names[cls] + " is too small to split");
    std::vector<int> tr(ids.begin(), ids.begin() + n_train);
    std::vector<int> te(ids.begin() + n_train, ids.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    train.by_class.push_back(std::move(tr));
    test.by_class.push_back(std::move(te));
  }
  train.validate();
  test.validate();
  return {train, test};
}

/// Keeps a stratified `fraction` of each class labeled; the remainder moves
/// to the unlabeled pool (its labels hidden but its class ratio preserved).
inline DatasetIndex make_hybrid(const DatasetIndex& train, double fraction,
                                std::uint64_t seed) {
  check(fraction > 0.0 && fraction <= 1.0, "labeled fraction must be in (0,1]");
  DatasetIndex out = train;
  if (fraction == 1.0) return out;
  Rng rng(seed);
  for (int cls = 0; cls < train.k; ++cls) {
    std::vector<int> ids = train.by_class[cls];
    for (std::size_t i = 0; i + 1 < ids.size(); ++i)
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
    long keep = std::lround(fraction * static_cast<double>(ids.size()));
    check(keep >= 1, "labeled fraction leaves class " + train.class_names[cls] + " empty");
    std::vector<int> lab(ids.begin(), ids.begin() + keep);
    std::sort(lab.begin(), lab.end());
    out.by_class[cls] = std::move(lab);
    out.unlabeled.insert(out.unlabeled.end(), ids.begin() + keep, ids.end());
  }
  std::sort(out.unlabeled.begin(), out.unlabeled.end());
  out.validate();
  return out;
}

/// Shrinks the unlabeled pool to a stratified-by-nothing uniform subset.
inline DatasetIndex limit_unlabeled(const DatasetIndex& index, double fraction,
                                    std::uint64_t seed) {
  check(fraction >= 0.0 && fraction <= 1.0, "unlabeled fraction must be in [0,1]");
  DatasetIndex out = index;
  Rng rng(seed);
  std::vector<int> ids = index.unlabeled;
  for (std::size_t i = 0; i + 1 < ids.size(); ++i)
    std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
  long keep = std::lround(fraction * static_cast<double>(ids.size()));
  ids.resize(keep);
  std::sort(ids.begin(), ids.end());
  out.unlabeled = std::move(ids);
  return out;
}

// ---------------------------------------------------------------------------
// Disk layout: root/<split>/<class>/*.png, unlabeled at root/<split>/_unlabeled
// ---------------------------------------------------------------------------

inline constexpr const char* kUnlabeledDir = "_unlabeled";

/// Materializes one split to dir/<class>/<id>.png (+ dir/_unlabeled/).
inline void write_split(const Dataset& ds, const DatasetIndex& index,
                        const std::filesystem::path& dir) {
  for (int cls = 0; cls < index.k; ++cls)
    for (int id : index.by_class[cls]) {
      char name[32];
      std::snprintf(name, sizeof name, "%06d.png", id);
      save_image(dir / index.class_names[cls] / name, load_pixels(ds, index, id));
    }
  for (int id : index.unlabeled) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", id);
    save_image(dir / kUnlabeledDir / name, load_pixels(ds, index, id));
  }
}

/// Reads one split directory back: class folders in sorted order, files in
/// sorted order, every image bicubic-resized to S and mapped to [-1, 1].
/// Undecodable files are skipped with a warning; an empty class is an error.
inline Dataset ingest_dir(const std::filesystem::path& dir, int s) {
  namespace fs = std::filesystem;
  check(fs::is_directory(dir), "dataset directory not found: " + dir.string());
  std::vector<std::string> class_dirs;
  bool has_unlabeled = false;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_directory()) continue;
    std::string name = e.path().filename().string();
    if (name == kUnlabeledDir)
      has_unlabeled = true;
    else
      class_dirs.push_back(name);
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  check(!class_dirs.empty(), "no class folders under " + dir.string());

  Dataset ds;
  ds.index.k = static_cast<int>(class_dirs.size());
  ds.index.image_size = s;
  ds.index.class_names = class_dirs;
  int id = 0;
  auto read_folder = [&](const fs::path& folder, int label) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(folder))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<int> ids;
    for (const auto& f : files) {
      Tensor<float> img;
      if (!load_image(f, img)) {
        std::cerr << "warning: skipping undecodable file " << f << "\n";
        continue;
      }
      ds.records.push_back(
          {label, bicubic_resize(img, s, s), "file:" + f.string()});
      ids.push_back(id++);
    }
    return ids;
  };
  for (int cls = 0; cls < ds.index.k; ++cls) {
    auto ids = read_folder(dir / class_dirs[cls], cls);
    check(!ids.empty(), "class folder " + class_dirs[cls] + " has no readable images");
    ds.index.by_class.push_back(std::move(ids));
  }
  if (has_unlabeled) ds.index.unlabeled = read_folder(dir / kUnlabeledDir, -1);
  ds.index.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Offline GAN over-sampling
// ---------------------------------------------------------------------------

/// Samples `count` images from a generator checkpoint, writes them under
/// out_dir/<class>/gan_<seq>.png, and appends them to the dataset with the
/// minority label.
inline void oversample_gan(Dataset& ds, const std::filesystem::path& ckpt_dir, int cls,
                           long count, const std::filesystem::path& out_dir,
                           std::uint64_t seed) {
  check(cls >= 0 && cls < ds.index.k, "oversample_gan: class out of range");
  auto spec = generator_spec(ds.index.image_size);
  Params gp = load_params_checked(ckpt_dir, spec);
  Rng rng(seed);
  long seq = 0;
  // new records land at the end of the store; ids are their positions
  int next_id = static_cast<int>(ds.records.size());
  check(ds.index.max_id() < next_id, "index refers to ids beyond the record store");
  while (seq < count) {
    int n = static_cast<int>(std::min<long>(64, count - seq));
    Tensor<float> z({n, spec.input_size});
    for (auto& v : z.data) v = static_cast<float>(rng.normal());
    Tape<float> tp;
    auto res = forward(tp, spec, gp, tp.constant(z), Mode::kInfer, rng, false);
    const Tensor<float>& imgs = tp.value(res.out);
    int s = imgs.dim(1);
    for (int i = 0; i < n; ++i, ++seq) {
      Tensor<float> img({s, s, 3});
      std::copy_n(imgs.data.begin() + std::size_t(i) * img.numel(), img.numel(),
                  img.data.begin());
      char name[32];
      std::snprintf(name, sizeof name, "gan_%06ld.png", seq);
      save_image(out_dir / ds.index.class_names[cls] / name, img);
      ds.records.push_back({cls, std::move(img), "synthetic-gan"});
      ds.index.by_class[cls].push_back(next_id++);
    }
  }
  ds.index.validate();
}

}  // namespace bssgan
