#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bssgan/adam.hpp"
#include "bssgan/checkpoint.hpp"
#include "bssgan/config.hpp"
#include "bssgan/data.hpp"
#include "bssgan/evaluation.hpp"
#include "bssgan/losses.hpp"
#include "bssgan/network.hpp"
#include "bssgan/sampling.hpp"

namespace bssgan {

struct StepLoss {
  long step = 0;
  double loss_d = 0, loss_d_us = 0, loss_d_s = 0;
  double loss_g = 0, loss_g_h = 0, loss_g_fm = 0;
};

struct EpochEntry {
  int epoch = 0;
  std::string checkpoint;  // directory name under out_dir
  MetricsReport metrics;
};

struct TrainLog {
  std::vector<StepLoss> steps;
  std::vector<EpochEntry> epochs;
  std::vector<std::string> warnings;
};

inline void write_train_log(const TrainLog& log, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "steps.csv");
    check(os.good(), "cannot write " + (out_dir / "steps.csv").string());
    os.precision(12);
    os << "step,loss_d,loss_d_us,loss_d_s,loss_g,loss_g_h,loss_g_fm\n";
    for (const auto& s : log.steps)
      os << s.step << ',' << s.loss_d << ',' << s.loss_d_us << ',' << s.loss_d_s << ','
         << s.loss_g << ',' << s.loss_g_h << ',' << s.loss_g_fm << '\n';
  }
  {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : log.epochs)
      j.push_back({{"epoch", e.epoch},
                   {"checkpoint", e.checkpoint},
                   {"metrics", report_json(e.metrics)}});
    nlohmann::json root{{"epochs", j}, {"warnings", log.warnings}};
    std::ofstream os(out_dir / "epochs.json");
    check(os.good(), "cannot write " + (out_dir / "epochs.json").string());
    os << root.dump(2) << '\n';
  }
}

/// Binary rule: highest TPR among epochs with TNR > 0.90. Ternary rule:
/// highest last-class recall with first-class recall > 0.90. If nothing
/// satisfies the constraint, falls back to the unconstrained argmax and
/// records a warning.
inline int select_best(TrainLog& log, const std::string& rule) {
  check(!log.epochs.empty(), "model selection over an empty log");
  auto objective = [&](const MetricsReport& m) {
    return rule == "ternary" ? (m.recalls.back().defined ? m.recalls.back().value : -1.0)
                             : (m.tpr.defined ? m.tpr.value : -1.0);
  };
  auto feasible = [&](const MetricsReport& m) {
    return rule == "ternary"
               ? (m.recalls.front().defined && m.recalls.front().value > 0.90)
               : (m.tnr.defined && m.tnr.value > 0.90);
  };
  int best = -1;
  for (std::size_t i = 0; i < log.epochs.size(); ++i) {
    if (!feasible(log.epochs[i].metrics)) continue;
    if (best < 0 || objective(log.epochs[i].metrics) >= objective(log.epochs[best].metrics))
      best = static_cast<int>(i);  // ties break toward the later epoch
  }
  if (best < 0) {
    log.warnings.push_back(
        "no epoch satisfies the " + rule +
        " selection constraint; falling back to the unconstrained optimum");
    for (std::size_t i = 0; i < log.epochs.size(); ++i)
      if (best < 0 || objective(log.epochs[i].metrics) >= objective(log.epochs[best].metrics))
        best = static_cast<int>(i);
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace detail {

inline Tensor<float> sample_noise(int n, int dim, Rng& rng) {
  Tensor<float> z({n, dim});
  for (auto& v : z.data) v = static_cast<float>(rng.normal());
  return z;
}

/// Generated images, detached from the generator graph.
inline Tensor<float> generate_images(const NetworkSpec& gspec, Params& gp,
                                     const Tensor<float>& z, Rng& rng) {
  Tape<float> tp;
  auto res = forward(tp, gspec, gp, tp.constant(z), Mode::kTrain, rng, false);
  return tp.value(res.out);
}

inline std::vector<int> all_labeled_ids(const DatasetIndex& idx, std::vector<int>* labels) {
  std::vector<int> ids;
  for (int cls = 0; cls < idx.k; ++cls)
    for (int id : idx.by_class[cls]) {
      ids.push_back(id);
      if (labels) labels->push_back(cls);
    }
  return ids;
}

}  // namespace detail

/// Classifier metrics over an index, batched; dropout off, BN running stats.
inline MetricsReport evaluate_classifier(const NetworkSpec& spec, Params& params,
                                         const Dataset& ds, const DatasetIndex& idx,
                                         const std::string& pipeline,
                                         const std::string& ckpt) {
  std::vector<int> truth;
  std::vector<int> ids = detail::all_labeled_ids(idx, &truth);
  std::vector<int> pred;
  for (std::size_t at = 0; at < ids.size(); at += 60) {
    std::vector<int> chunk(ids.begin() + at,
                           ids.begin() + std::min(at + 60, ids.size()));
    auto p = predict(spec, params, gather_batch(ds, idx, chunk), idx.k);
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return make_report(pipeline, ckpt, confusion(pred, truth, idx.k));
}

/// Where per-epoch metrics come from: usually a held-out validation slice of
/// the training data; `select_on_test` swaps in the test set.
struct EvalTarget {
  const Dataset* ds = nullptr;
  DatasetIndex idx;
};

// ---------------------------------------------------------------------------
// Supervised pipelines (BSL family, BUS, BOS-*)
// ---------------------------------------------------------------------------

enum class SupLoss { kPlain, kBalanced, kFocal };

/// Shuffled-epoch minibatch training of the C=K classifier. The caller picks
/// the index (full/undersampled/oversampled) and the loss flavour.
inline TrainLog train_supervised(const ExperimentConfig& cfg, const Dataset& ds,
                                 const DatasetIndex& fit, const EvalTarget& eval,
                                 SupLoss kind, const std::filesystem::path& out_dir,
                                 Params* inherit = nullptr, long step0 = 0) {
  auto spec = discriminator_spec(cfg.k, /*semi_supervised=*/false, cfg.image_size);
  Rng rng = Rng(cfg.seed).fork(1);
  Params params = inherit ? std::move(*inherit) : init_xavier<float>(spec, rng);
  AdamState<float> adam;

  std::vector<double> alpha(cfg.k, 1.0);
  if (kind != SupLoss::kPlain) alpha = reverse_frequency_weights(fit.counts());

  std::vector<int> labels;
  std::vector<int> ids = detail::all_labeled_ids(fit, &labels);

  TrainLog log;
  long step = step0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // in-place shuffle of (id, label) pairs
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      std::size_t j = i + rng.below(ids.size() - i);
      std::swap(ids[i], ids[j]);
      std::swap(labels[i], labels[j]);
    }
    try {
      for (std::size_t at = 0; at < ids.size(); at += cfg.n_l) {
        std::size_t hi = std::min(at + cfg.n_l, ids.size());
        std::vector<int> bid(ids.begin() + at, ids.begin() + hi);
        std::vector<int> by(labels.begin() + at, labels.begin() + hi);
        Tape<float> tp;
        NodeId x = tp.constant(gather_batch(ds, fit, bid));
        auto res = forward(tp, spec, params, x, Mode::kTrain, rng);
        auto loss = kind == SupLoss::kFocal
                        ? focal_loss(tp, res.out, by, alpha,
                                     static_cast<float>(cfg.focal_gamma))
                        : balanced_cross_entropy(tp, res.out, by, alpha);
        auto grads = tp.backward(loss.node);
        adam_step(params, grads, adam, static_cast<float>(cfg.lr));
        log.steps.push_back({step++, loss.value, 0, loss.value, 0, 0, 0});
      }
    } catch (const NanGradientError&) {
      log.warnings.push_back("NaN gradient at step " + std::to_string(step) +
                             "; training aborted, last-good checkpoint retained");
      write_train_log(log, out_dir);
      throw;
    }
    std::string ckpt = "epoch_" + std::to_string(epoch);
    save_checkpoint(out_dir / ckpt / "disc", params, spec.fingerprint(), &adam);
    log.epochs.push_back(
        {epoch, ckpt,
         evaluate_classifier(spec, params, *eval.ds, eval.idx, cfg.pipeline, ckpt)});
  }
  write_train_log(log, out_dir);
  return log;
}

// ---------------------------------------------------------------------------
// BSS-GAN
// ---------------------------------------------------------------------------

/// Balanced semi-supervised GAN training: per step, draw the balanced batch,
/// update the K+1-way discriminator on the combined objective, then update
/// the generator on feature matching + the heuristic term (fresh forward).
inline TrainLog train_bss_gan(const ExperimentConfig& cfg, const Dataset& ds,
                              const DatasetIndex& fit, const EvalTarget& eval,
                              const std::filesystem::path& out_dir) {
  auto dspec = discriminator_spec(cfg.k, /*semi_supervised=*/true, cfg.image_size);
  auto gspec = generator_spec(cfg.image_size);
  Rng seeds(cfg.seed);
  Rng rng = seeds.fork(2);
  Rng dinit = seeds.fork(3);
  Rng ginit = seeds.fork(4);
  Params dp = init_xavier<float>(dspec, dinit);
  Params gp = init_xavier<float>(gspec, ginit);
  AdamState<float> dadam, gadam;

  auto plan = plan_balanced_batch(cfg.k, cfg.n_l, cfg.c);
  int batches = epoch_schedule(fit, plan);

  TrainLog log;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      for (int b = 0; b < batches; ++b) {
        Batch batch = draw_balanced_batch(fit, plan, rng, gspec.input_size);
        std::vector<int> real_ids = batch.labeled_ids;
        real_ids.insert(real_ids.end(), batch.unlabeled_ids.begin(),
                        batch.unlabeled_ids.end());
        Tensor<float> real = gather_batch(ds, fit, real_ids);
        int n_real = real.dim(0);

        // discriminator step on detached generator output
        Tensor<float> fake = detail::generate_images(gspec, gp, batch.z, rng);
        StepLoss sl;
        sl.step = step;
        {
          Tape<float> tp;
          NodeId x = concat_rows(tp, {tp.constant(real), tp.constant(fake)});
          auto res = forward(tp, dspec, dp, x, Mode::kTrain, rng);
          NodeId p_real = slice_rows(tp, res.out, 0, n_real);
          NodeId p_gen = slice_rows(tp, res.out, n_real, plan.n_g);
          auto loss = d_total(tp, p_real, batch.labels, p_gen);
          auto grads = tp.backward(loss.node);
          adam_step(dp, grads, dadam, static_cast<float>(cfg.lr));
          sl.loss_d = loss.value;
          sl.loss_d_us = loss.component("unsupervised");
          sl.loss_d_s = loss.component("supervised");
        }
        // generator step: fresh forward through the updated, frozen D
        {
          Tape<float> tp;
          auto gres = forward(tp, gspec, gp, tp.constant(batch.z), Mode::kTrain, rng);
          NodeId x = concat_rows(tp, {tp.constant(real), gres.out});
          auto res = forward(tp, dspec, dp, x, Mode::kTrain, rng, /*train_params=*/false);
          NodeId f_real = slice_rows(tp, res.features, 0, n_real);
          NodeId f_gen = slice_rows(tp, res.features, n_real, plan.n_g);
          NodeId p_gen = slice_rows(tp, res.out, n_real, plan.n_g);
          auto loss = g_total(tp, f_real, f_gen, p_gen);
          auto grads = tp.backward(loss.node);
          adam_step(gp, grads, gadam, static_cast<float>(cfg.lr));
          sl.loss_g = loss.value;
          sl.loss_g_h = loss.component("heuristic");
          sl.loss_g_fm = loss.component("feature_matching");
        }
        log.steps.push_back(sl);
        ++step;
      }
    } catch (const NanGradientError&) {
      log.warnings.push_back("NaN gradient at step " + std::to_string(step) +
                             "; training aborted, last-good checkpoint retained");
      write_train_log(log, out_dir);
      throw;
    }
    std::string ckpt = "epoch_" + std::to_string(epoch);
    save_checkpoint(out_dir / ckpt / "disc", dp, dspec.fingerprint(), &dadam);
    save_checkpoint(out_dir / ckpt / "gen", gp, gspec.fingerprint(), &gadam);
    log.epochs.push_back(
        {epoch, ckpt,
         evaluate_classifier(dspec, dp, *eval.ds, eval.idx, cfg.pipeline, ckpt)});
  }
  write_train_log(log, out_dir);
  return log;
}

// ---------------------------------------------------------------------------
// Ordinary GAN (for BOS-GAN over-sampling and SDF pre-training)
// ---------------------------------------------------------------------------

/// Classic two-player GAN on one image pool (typically a single class); the
/// discriminator has two outputs (real, synthetic). Saves a generator
/// checkpoint per epoch and returns the path of the final one.
inline std::filesystem::path train_ordinary_gan(const ExperimentConfig& cfg,
                                                const Dataset& ds,
                                                const std::vector<int>& pool,
                                                const std::filesystem::path& out_dir,
                                                std::uint64_t seed_key) {
  check(!pool.empty(), "GAN training needs a non-empty image pool");
  auto dspec = discriminator_spec(2, /*semi_supervised=*/false, cfg.image_size);
  auto gspec = generator_spec(cfg.image_size);
  Rng seeds = Rng(cfg.seed).fork(seed_key);
  Rng rng = seeds.fork(1);
  Rng dinit = seeds.fork(2);
  Rng ginit = seeds.fork(3);
  Params dp = init_xavier<float>(dspec, dinit);
  Params gp = init_xavier<float>(gspec, ginit);
  AdamState<float> dadam, gadam;

  int batch = std::min<int>(cfg.n_l, static_cast<int>(pool.size()));
  int batches = static_cast<int>((pool.size() + batch - 1) / batch);

  TrainLog log;
  long step = 0;
  std::filesystem::path last;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      for (int b = 0; b < batches; ++b) {
        std::vector<int> ids(batch);
        for (int& id : ids) id = pool[rng.below(pool.size())];
        Tensor<float> real = gather_batch(ds, ds.index, ids);
        Tensor<float> z = detail::sample_noise(batch, gspec.input_size, rng);
        StepLoss sl;
        sl.step = step;
        {
          Tensor<float> fake = detail::generate_images(gspec, gp, z, rng);
          Tape<float> tp;
          NodeId x = concat_rows(tp, {tp.constant(real), tp.constant(fake)});
          auto res = forward(tp, dspec, dp, x, Mode::kTrain, rng);
          auto [dl, gl] = ordinary_gan_losses(tp, slice_rows(tp, res.out, 0, batch),
                                              slice_rows(tp, res.out, batch, batch));
          auto grads = tp.backward(dl.node);
          adam_step(dp, grads, dadam, static_cast<float>(cfg.lr));
          sl.loss_d = dl.value;
        }
        {
          Tape<float> tp;
          auto gres = forward(tp, gspec, gp, tp.constant(z), Mode::kTrain, rng);
          NodeId x = concat_rows(tp, {tp.constant(real), gres.out});
          auto res = forward(tp, dspec, dp, x, Mode::kTrain, rng, /*train_params=*/false);
          auto [dl, gl] = ordinary_gan_losses(tp, slice_rows(tp, res.out, 0, batch),
                                              slice_rows(tp, res.out, batch, batch));
          auto grads = tp.backward(gl.node);
          adam_step(gp, grads, gadam, static_cast<float>(cfg.lr));
          sl.loss_g = gl.value;
          sl.loss_g_h = gl.value;
        }
        log.steps.push_back(sl);
        ++step;
      }
    } catch (const NanGradientError&) {
      log.warnings.push_back("NaN gradient at step " + std::to_string(step) +
                             "; GAN training aborted");
      write_train_log(log, out_dir);
      throw;
    }
    std::string ckpt = "epoch_" + std::to_string(epoch);
    save_checkpoint(out_dir / ckpt / "gen", gp, gspec.fingerprint(), &gadam);
    last = out_dir / ckpt / "gen";
  }
  write_train_log(log, out_dir);
  return last;
}

// ---------------------------------------------------------------------------
// Pipeline dispatch
// ---------------------------------------------------------------------------

struct PipelineResult {
  TrainLog log;
  int selected_epoch = -1;
  std::filesystem::path selected_checkpoint;  // .../epoch_<n>/disc
};

/// Runs one configured experiment end to end on an ingested training set.
/// `test` is only consulted when cfg.select_on_test is set.
inline PipelineResult run_pipeline(const ExperimentConfig& cfg, const Dataset& train,
                                   const Dataset* test = nullptr) {
  cfg.validate();
  std::filesystem::path out_dir(cfg.out_dir);
  std::filesystem::create_directories(out_dir);

  // hide labels per the hybrid protocol, then trim the unlabeled pool
  DatasetIndex labeled = make_hybrid(train.index, cfg.labeled_fraction, cfg.seed ^ 0x11);
  labeled = limit_unlabeled(labeled, cfg.unlabeled_fraction, cfg.seed ^ 0x12);

  // held-out validation slice (10% of the labeled data, stratified) unless the
  // caller explicitly selects on the test set
  DatasetIndex fit = labeled;
  EvalTarget eval;
  if (cfg.select_on_test) {
    check(test != nullptr, "select_on_test requires a test dataset");
    eval.ds = test;
    eval.idx = test->index;
  } else {
    auto [fit_part, val_part] = make_split(labeled, cfg.seed ^ 0x13, 0.9);
    fit_part.unlabeled = labeled.unlabeled;
    fit = fit_part;
    eval.ds = &train;
    eval.idx = val_part;
  }

  Rng rng = Rng(cfg.seed).fork(7);
  PipelineResult result;
  if (cfg.pipeline == "bss-gan") {
    result.log = train_bss_gan(cfg, train, fit, eval, out_dir);
  } else if (cfg.pipeline == "bsl") {
    result.log = train_supervised(cfg, train, fit, eval, SupLoss::kPlain, out_dir);
  } else if (cfg.pipeline == "bsl-bce") {
    result.log = train_supervised(cfg, train, fit, eval, SupLoss::kBalanced, out_dir);
  } else if (cfg.pipeline == "bsl-focal") {
    result.log = train_supervised(cfg, train, fit, eval, SupLoss::kFocal, out_dir);
  } else if (cfg.pipeline == "bus") {
    result.log = train_supervised(cfg, train, undersample(fit, rng), eval,
                                  SupLoss::kPlain, out_dir);
  } else if (cfg.pipeline == "bos-da") {
    DaConfig da{cfg.da.flip, cfg.da.translate_frac, cfg.da.rotate_deg};
    result.log = train_supervised(cfg, train, oversample_da(fit, da, rng), eval,
                                  SupLoss::kPlain, out_dir);
  } else if (cfg.pipeline == "bos-gan") {
    // stage 1: class-specific GAN on the minority pool; stage 2: supervised
    // training on the GAN-oversampled index
    auto counts = fit.counts();
    int minority =
        static_cast<int>(std::min_element(counts.begin(), counts.end()) - counts.begin());
    auto gan_ckpt =
        train_ordinary_gan(cfg, train, fit.by_class[minority], out_dir / "gan", 21);
    Dataset padded = train;  // private copy: synthetic records get appended
    padded.index = fit;
    long deficit = *std::max_element(counts.begin(), counts.end()) - counts[minority];
    oversample_gan(padded, gan_ckpt, minority, deficit, out_dir / "synthetic",
                   cfg.seed ^ 0x21);
    if (!cfg.select_on_test) eval.ds = &padded;  // same records, ids untouched
    result.log = train_supervised(cfg, padded, padded.index, eval, SupLoss::kPlain,
                                  out_dir);
  } else if (cfg.pipeline == "bsl-sdf") {
    // stage 1: pre-train on an all-synthetic dataset drawn from per-class
    // GANs; stage 2: fine-tune the same weights on the real data
    Dataset synth;
    synth.index.k = fit.k;
    synth.index.image_size = cfg.image_size;
    synth.index.class_names = fit.class_names;
    synth.index.by_class.resize(fit.k);
    for (int cls = 0; cls < fit.k; ++cls) {
      auto gan_ckpt = train_ordinary_gan(cfg, train, fit.by_class[cls],
                                         out_dir / ("gan_" + std::to_string(cls)),
                                         31 + cls);
      synth.index.by_class[cls] = {};
      long want = static_cast<long>(fit.by_class[cls].size());
      std::size_t before = synth.records.size();
      oversample_gan(synth, gan_ckpt, cls, want, out_dir / "synthetic", cfg.seed ^ (0x31 + cls));
      (void)before;
    }
    EvalTarget synth_eval{&synth, synth.index};
    auto stage1 = train_supervised(cfg, synth, synth.index, synth_eval, SupLoss::kPlain,
                                   out_dir / "stage1");
    // hand the stage-1 weights over for fine-tuning on real data
    auto spec = discriminator_spec(cfg.k, false, cfg.image_size);
    Params warm = load_params_checked(
        out_dir / "stage1" / ("epoch_" + std::to_string(cfg.epochs - 1)) / "disc", spec);
    result.log = train_supervised(cfg, train, fit, eval, SupLoss::kPlain, out_dir, &warm);
  } else {
    throw std::invalid_argument("unhandled pipeline " + cfg.pipeline);
  }

  result.selected_epoch = select_best(result.log, cfg.select_rule);
  result.selected_checkpoint =
      out_dir / result.log.epochs[result.selected_epoch].checkpoint / "disc";
  write_train_log(result.log, out_dir);  // re-write with selection warnings
  {
    nlohmann::json j{{"selected_epoch", result.selected_epoch},
                     {"selected_checkpoint", result.selected_checkpoint.string()}};
    std::ofstream os(out_dir / "selection.json");
    os << j.dump(2) << '\n';
  }
  return result;
}

}  // namespace bssgan
