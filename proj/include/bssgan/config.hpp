#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bssgan/tensor.hpp"

namespace bssgan {

inline const std::vector<std::string> kPipelines{
    "bsl", "bus", "bos-da", "bos-gan", "bsl-sdf", "bss-gan", "bsl-bce", "bsl-focal"};

struct DaSettings {
  bool flip = true;
  double translate_frac = 0.1;
  double rotate_deg = 15.0;
};

/// One experiment, one JSON file. Defaults mirror the reference setup:
/// 300 epochs, lr 2e-5, n_l = 60.
struct ExperimentConfig {
  std::string pipeline = "bsl";
  int k = 2;
  int image_size = 128;
  int n_l = 60;
  double c = 0.0;
  int epochs = 300;
  double lr = 2e-5;
  std::uint64_t seed = 0;
  std::string select_rule = "binary";  // binary | ternary
  bool select_on_test = false;
  std::string dataset_root;
  double labeled_fraction = 1.0;
  double unlabeled_fraction = 1.0;
  DaSettings da;
  double focal_gamma = 2.0;
  std::string out_dir;

  void validate() const {
    bool known = false;
    for (const auto& p : kPipelines) known = known || p == pipeline;
    if (!known) {
      std::string ids;
      for (const auto& p : kPipelines) ids += (ids.empty() ? "" : ", ") + p;
      throw std::invalid_argument("unknown pipeline '" + pipeline + "'; valid ids: " + ids);
    }
    check(k >= 2, "k must be >= 2");
    check(image_size > 0 && image_size % 4 == 0, "image_size must be a positive multiple of 4");
    check(n_l > 0 && n_l % k == 0, "n_l must be a positive multiple of k");
    check(c >= 0.0, "c must be non-negative");
    check(epochs > 0, "epochs must be positive");
    check(lr > 0.0, "lr must be positive");
    check(select_rule == "binary" || select_rule == "ternary",
          "select_rule must be binary or ternary");
    check(labeled_fraction > 0.0 && labeled_fraction <= 1.0, "labeled_fraction in (0,1]");
    check(unlabeled_fraction >= 0.0 && unlabeled_fraction <= 1.0,
          "unlabeled_fraction in [0,1]");
    check(focal_gamma >= 0.0, "focal_gamma must be non-negative");
    check(!dataset_root.empty(), "dataset_root is required");
    check(!out_dir.empty(), "out_dir is required");
  }
};

inline void to_json(nlohmann::json& j, const DaSettings& d) {
  j = {{"flip", d.flip}, {"translate_frac", d.translate_frac}, {"rotate_deg", d.rotate_deg}};
}
inline void from_json(const nlohmann::json& j, DaSettings& d) {
  d.flip = j.value("flip", d.flip);
  d.translate_frac = j.value("translate_frac", d.translate_frac);
  d.rotate_deg = j.value("rotate_deg", d.rotate_deg);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"pipeline", c.pipeline},
       {"k", c.k},
       {"image_size", c.image_size},
       {"n_l", c.n_l},
       {"c", c.c},
       {"epochs", c.epochs},
       {"lr", c.lr},
       {"seed", c.seed},
       {"select_rule", c.select_rule},
       {"select_on_test", c.select_on_test},
       {"dataset_root", c.dataset_root},
       {"labeled_fraction", c.labeled_fraction},
       {"unlabeled_fraction", c.unlabeled_fraction},
       {"da", c.da},
       {"focal_gamma", c.focal_gamma},
       {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  ExperimentConfig d;
  c.pipeline = j.value("pipeline", d.pipeline);
  c.k = j.value("k", d.k);
  c.image_size = j.value("image_size", d.image_size);
  c.n_l = j.value("n_l", d.n_l);
  c.c = j.value("c", d.c);
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.seed = j.value("seed", d.seed);
  c.select_rule = j.value("select_rule", d.select_rule);
  c.select_on_test = j.value("select_on_test", d.select_on_test);
  c.dataset_root = j.value("dataset_root", d.dataset_root);
  c.labeled_fraction = j.value("labeled_fraction", d.labeled_fraction);
  c.unlabeled_fraction = j.value("unlabeled_fraction", d.unlabeled_fraction);
  c.da = j.value("da", d.da);
  c.focal_gamma = j.value("focal_gamma", d.focal_gamma);
  c.out_dir = j.value("out_dir", d.out_dir);
}

}  // namespace bssgan
