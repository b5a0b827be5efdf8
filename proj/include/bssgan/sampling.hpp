#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bssgan/rng.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

/// Geometric augmentation applied to one image. dx/dy in pixels, rotation in
/// degrees about the image center.
struct Transform {
  bool flip_h = false;
  int dx = 0;
  int dy = 0;
  double rot_deg = 0.0;
  bool identity() const { return !flip_h && dx == 0 && dy == 0 && rot_deg == 0.0; }
};

/// Augmentation ranges used by conventional over-sampling.
struct DaConfig {
  bool flip = true;
  double translate_frac = 0.1;  // max |shift| as a fraction of the image side
  double rotate_deg = 15.0;     // max |rotation|
};

/// Per-class labeled id lists plus the unlabeled pool. Ids refer into a
/// record store owned elsewhere; augmented ids carry a base id + transform.
struct DatasetIndex {
  int k = 0;
  int image_size = 0;
  std::vector<std::string> class_names;    // size k
  std::vector<std::vector<int>> by_class;  // size k
  std::vector<int> unlabeled;
  std::map<int, std::pair<int, Transform>> augmented;  // new id -> (base id, t)

  std::vector<long> counts() const {
    std::vector<long> c;
    for (const auto& ids : by_class) c.push_back(static_cast<long>(ids.size()));
    return c;
  }

  long total_labeled() const {
    long n = 0;
    for (const auto& ids : by_class) n += static_cast<long>(ids.size());
    return n;
  }

  int label_of(int id) const {
    for (int cls = 0; cls < k; ++cls)
      if (std::find(by_class[cls].begin(), by_class[cls].end(), id) != by_class[cls].end())
        return cls;
    return -1;
  }

  int max_id() const {
    int m = -1;
    for (const auto& ids : by_class)
      for (int id : ids) m = std::max(m, id);
    for (int id : unlabeled) m = std::max(m, id);
    return m;
  }

  /// Enforces the structural invariants: class lists disjoint, ids unique.
  void validate() const {
    check(static_cast<int>(by_class.size()) == k, "index has wrong class-list count");
    std::set<int> seen;
    for (const auto& ids : by_class)
      for (int id : ids)
        check(seen.insert(id).second, "duplicate labeled id " + std::to_string(id));
    for (int id : unlabeled)
      check(seen.insert(id).second,
            "id " + std::to_string(id) + " is both labeled and unlabeled");
  }
};

/// Batch composition: n_l labeled (n_l/K per class), n_g generated, n_ul
/// unlabeled; m = n_l + n_g + n_ul.
struct BatchPlan {
  int k = 0;
  int n_l = 0;
  int n_g = 0;
  int n_ul = 0;
  double c = 0.0;
  int per_class() const { return n_l / k; }
  int m() const { return n_l + n_g + n_ul; }
};

inline BatchPlan plan_balanced_batch(int k, int n_l, double c) {
  check(k >= 2, "plan requires K >= 2");
  check(n_l > 0 && n_l % k == 0, "n_l must be a positive multiple of K");
  check(c >= 0.0, "c must be non-negative");
  double ul = c * n_l / k;
  check(ul == std::floor(ul), "c * n_l / K must be an integer; got " + std::to_string(ul));
  BatchPlan p;
  p.k = k;
  p.n_l = n_l;
  p.n_g = n_l / k;
  p.n_ul = static_cast<int>(ul);
  p.c = c;
  return p;
}

/// One drawn batch: labeled rows grouped class-major, the unlabeled draw, and
/// the noise rows reserved for the generator.
struct Batch {
  std::vector<int> labeled_ids;    // n_l
  std::vector<int> labels;         // n_l, 0-based
  std::vector<int> unlabeled_ids;  // n_ul
  Tensor<float> z{Shape{1, 1}, 0.f};  // (n_g, noise_dim)
};

/// Uniform WITH-replacement draw inside every class pool, so equal sub-batches
/// survive arbitrarily small minority pools.
inline Batch draw_balanced_batch(const DatasetIndex& index, const BatchPlan& plan, Rng& rng,
                                 int noise_dim = 100) {
  check(index.k == plan.k, "index/plan class-count mismatch");
  Batch b;
  for (int cls = 0; cls < plan.k; ++cls) {
    const auto& pool = index.by_class[cls];
    check(!pool.empty(), "class " + (cls < static_cast<int>(index.class_names.size())
                                         ? index.class_names[cls]
                                         : std::to_string(cls)) +
                             " has no samples to draw from");
    for (int i = 0; i < plan.per_class(); ++i) {
      b.labeled_ids.push_back(pool[rng.below(pool.size())]);
      b.labels.push_back(cls);
    }
  }
  if (plan.n_ul > 0) {
    check(!index.unlabeled.empty(), "unlabeled pool is empty but n_ul > 0");
    for (int i = 0; i < plan.n_ul; ++i)
      b.unlabeled_ids.push_back(index.unlabeled[rng.below(index.unlabeled.size())]);
  }
  b.z = Tensor<float>({plan.n_g, noise_dim});
  for (auto& v : b.z.data) v = static_cast<float>(rng.normal());
  return b;
}

/// Truncates every class to the minority count by uniform sampling without
/// replacement; minority samples are never dropped.
inline DatasetIndex undersample(const DatasetIndex& index, Rng& rng) {
  check(index.k > 0, "undersample on an empty index");
  std::size_t target = index.by_class[0].size();
  for (const auto& ids : index.by_class) target = std::min(target, ids.size());
  DatasetIndex out = index;
  for (auto& ids : out.by_class) {
    // partial Fisher-Yates: the first `target` slots become the kept sample
    for (std::size_t i = 0; i < target; ++i)
      std::swap(ids[i], ids[i + rng.below(ids.size() - i)]);
    ids.resize(target);
    std::sort(ids.begin(), ids.end());
  }
  return out;
}

/// Pads every minority class with transformed copies of its own samples until
/// all classes match the majority count. The transform is recorded per new id
/// and applied when pixels are materialized.
inline DatasetIndex oversample_da(const DatasetIndex& index, const DaConfig& cfg, Rng& rng) {
  DatasetIndex out = index;
  std::size_t target = 0;
  for (const auto& ids : index.by_class) target = std::max(target, ids.size());
  int next_id = index.max_id() + 1;
  int max_shift = std::max(0, static_cast<int>(cfg.translate_frac * index.image_size));
  for (int cls = 0; cls < index.k; ++cls) {
    const auto& pool = index.by_class[cls];
    check(!pool.empty(), "cannot over-sample an empty class");
    while (out.by_class[cls].size() < target) {
      int base = pool[rng.below(pool.size())];
      Transform t;
      if (cfg.flip) t.flip_h = rng.below(2) == 1;
      if (max_shift > 0) {
        t.dx = static_cast<int>(rng.below(2 * max_shift + 1)) - max_shift;
        t.dy = static_cast<int>(rng.below(2 * max_shift + 1)) - max_shift;
      }
      if (cfg.rotate_deg > 0) t.rot_deg = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg);
      out.augmented.emplace(next_id, std::make_pair(base, t));
      out.by_class[cls].push_back(next_id);
      ++next_id;
    }
  }
  return out;
}

/// Batches per epoch: ceil(N_l / n_l) over the labeled training count.
inline int epoch_schedule(const DatasetIndex& index, const BatchPlan& plan) {
  long n = index.total_labeled();
  check(n > 0, "epoch schedule over an empty labeled set");
  return static_cast<int>((n + plan.n_l - 1) / plan.n_l);
}

}  // namespace bssgan
