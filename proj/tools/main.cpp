// Command-line front door: dataset synthesis, training, evaluation and
// sample generation, driven by a JSON config per experiment.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bssgan/data.hpp"
#include "bssgan/evaluation.hpp"
#include "bssgan/gemm.hpp"
#include "bssgan/trainer.hpp"

namespace fs = std::filesystem;
using namespace bssgan;

namespace {

constexpr const char* kVersion = "1.0.0";

// exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure
constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericError = 4;

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%FT%TZ", std::gmtime(&t));
  return buf;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

void write_manifest(const fs::path& out_dir, const nlohmann::json& config_like,
                    std::uint64_t seed, const std::string& started,
                    const std::vector<std::string>& artifacts) {
  nlohmann::json j{{"config_hash", fnv1a(config_like.dump())},
                   {"seed", seed},
                   {"version", kVersion},
                   {"started", started},
                   {"finished", now_iso()},
                   {"artifacts", artifacts}};
  std::ofstream os(out_dir / "run_manifest.json");
  os << j.dump(2) << '\n';
}

void require_empty_or_force(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw std::invalid_argument("output directory " + dir.string() +
                                " is not empty; pass --force to reuse it");
}

std::vector<long> parse_counts(const std::string& s) {
  std::vector<long> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stol(cell));
  return out;
}

std::vector<double> parse_betas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

/// Train/test pair from a dataset root: uses train/ and test/ subdirectories
/// when present, otherwise ingests the flat pool and splits 2:1.
std::pair<Dataset, Dataset> load_dataset(const fs::path& root, int s, std::uint64_t seed) {
  if (fs::is_directory(root / "train") && fs::is_directory(root / "test"))
    return {ingest_dir(root / "train", s), ingest_dir(root / "test", s)};
  Dataset all = ingest_dir(root, s);
  auto [train_idx, test_idx] = make_split(all.index, seed ^ 0x51);
  Dataset train = all, test = all;
  train.index = train_idx;
  test.index = test_idx;
  return {train, test};
}

int cmd_synth_data(const std::string& out, const std::string& counts_str, int size,
                   std::uint64_t seed, bool force) {
  std::string started = now_iso();
  auto counts = parse_counts(counts_str);
  fs::path dir(out);
  require_empty_or_force(dir, force);
  Dataset ds = make_procedural(counts, size, seed);
  write_split(ds, ds.index, dir);
  std::vector<std::string> artifacts;
  for (const auto& name : ds.index.class_names) artifacts.push_back((dir / name).string());
  write_manifest(dir, nlohmann::json{{"counts", counts}, {"size", size}}, seed, started,
                 artifacts);
  std::cout << "wrote " << ds.records.size() << " files under " << dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, bool force,
              const std::string& out_override, long seed_override) {
  std::string started = now_iso();
  std::ifstream is(config_path);
  if (!is.good()) throw std::invalid_argument("cannot read config " + config_path);
  ExperimentConfig cfg = nlohmann::json::parse(is).get<ExperimentConfig>();
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  cfg.validate();
  require_empty_or_force(cfg.out_dir, force);

  auto [train, test] = [&] {
    try {
      return load_dataset(cfg.dataset_root, cfg.image_size, cfg.seed);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("dataset error: ") + e.what());
    }
  }();

  auto result = run_pipeline(cfg, train, &test);

  // final report: the selected checkpoint scored on the held-out test split
  auto spec = discriminator_spec(cfg.k, cfg.pipeline == "bss-gan", cfg.image_size);
  Params params = load_params_checked(result.selected_checkpoint, spec);
  auto report = evaluate_classifier(spec, params, test, test.index, cfg.pipeline,
                                    result.log.epochs[result.selected_epoch].checkpoint);
  std::vector<double> sweep;
  for (int b = 1; b <= 10; ++b) sweep.push_back(b);
  emit_report(report, fs::path(cfg.out_dir) / "eval", sweep);

  write_manifest(cfg.out_dir, nlohmann::json(cfg), cfg.seed, started,
                 {(fs::path(cfg.out_dir) / "eval" / "metrics.json").string(),
                  (fs::path(cfg.out_dir) / "steps.csv").string(),
                  (fs::path(cfg.out_dir) / "epochs.json").string(),
                  result.selected_checkpoint.string()});
  std::cout << "selected " << result.selected_checkpoint << "\n";
  if (report.tpr.defined)
    std::cout << "test tpr " << report.tpr.value << " tnr " << report.tnr.value
              << " accuracy " << report.acc << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& betas,
             int k, int size, const std::string& out, const std::string& pipeline) {
  std::string started = now_iso();
  // semi-supervised and plain classifier heads have different widths; accept
  // whichever fingerprint the checkpoint carries
  Params params;
  NetworkSpec spec;
  bool loaded = false;
  for (bool semi : {false, true}) {
    auto s = discriminator_spec(k, semi, size);
    auto ck = load_checkpoint(ckpt);
    if (ck.fingerprint == s.fingerprint()) {
      spec = s;
      params = std::move(ck.params);
      loaded = true;
      break;
    }
  }
  if (!loaded)
    throw std::invalid_argument(
        "checkpoint at " + ckpt +
        " does not match a classifier of the given --k/--size; wrong checkpoint?");

  Dataset ds = [&] {
    try {
      return ingest_dir(data, size);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("dataset error: ") + e.what());
    }
  }();
  check(ds.index.k == k, "--k disagrees with the class folders in " + data);

  auto cm_report = evaluate_classifier(spec, params, ds, ds.index, pipeline, ckpt);
  auto beta_list = parse_betas(betas);
  if (cm_report.precision.defined && cm_report.recall.defined) {
    cm_report.f.clear();
    for (double b : beta_list)
      cm_report.f[b] = f_beta(cm_report.precision.value, cm_report.recall.value, b);
  }
  std::vector<double> sweep;
  for (int b = 1; b <= 10; ++b) sweep.push_back(b);
  fs::path out_dir(out);
  emit_report(cm_report, out_dir, k == 2 ? sweep : std::vector<double>{});
  write_manifest(out_dir, nlohmann::json{{"checkpoint", ckpt}, {"data", data}}, 0, started,
                 {(out_dir / "metrics.json").string()});
  std::cout << "accuracy " << cm_report.acc << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt, int n, std::uint64_t seed,
                 const std::string& out, int size) {
  std::string started = now_iso();
  auto spec = generator_spec(size);
  Params params;
  try {
    params = load_params_checked(ckpt, spec);
  } catch (const std::exception&) {
    throw std::invalid_argument("checkpoint at " + ckpt +
                                " lacks generator parameters for --size " +
                                std::to_string(size));
  }
  Rng rng(seed);
  Tensor<float> z({n, spec.input_size});
  for (auto& v : z.data) v = static_cast<float>(rng.normal());
  Tape<float> tp;
  auto res = forward(tp, spec, params, tp.constant(z), Mode::kInfer, rng, false);
  const Tensor<float>& imgs = tp.value(res.out);
  fs::path dir(out);
  std::vector<std::string> artifacts;
  for (int i = 0; i < n; ++i) {
    Tensor<float> img({size, size, 3});
    std::copy_n(imgs.data.begin() + std::size_t(i) * img.numel(), img.numel(),
                img.data.begin());
    char name[32];
    std::snprintf(name, sizeof name, "sample_%04d.png", i);
    save_image(dir / name, img);
  }
  save_image(dir / "grid.png", tile_grid(imgs, 8, 8));
  artifacts.push_back((dir / "grid.png").string());
  write_manifest(dir, nlohmann::json{{"checkpoint", ckpt}, {"n", n}}, seed, started,
                 artifacts);
  std::cout << "wrote " << n << " samples and grid.png under " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  gemm_force_single_thread();  // determinism over speed
  CLI::App app{"balanced semi-supervised GAN experiments"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "materialize a procedural dataset");
  std::string s_out, s_counts = "960,60";
  int s_size = 32;
  std::uint64_t s_seed = 0;
  bool s_force = false;
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--counts", s_counts, "per-class sample counts, e.g. 960,60,30");
  synth->add_option("--size", s_size, "image side length");
  synth->add_option("--seed", s_seed, "generation seed");
  synth->add_flag("--force", s_force, "allow a non-empty output directory");

  // train
  auto* train = app.add_subcommand("train", "run one experiment from a JSON config");
  std::string t_config, t_out;
  long t_seed = -1;
  bool t_force = false;
  train->add_option("--config", t_config, "experiment config JSON")->required();
  train->add_option("--out-dir", t_out, "override the config's out_dir");
  train->add_option("--seed", t_seed, "override the config's seed");
  train->add_flag("--force", t_force, "allow a non-empty output directory");

  // eval
  auto* ev = app.add_subcommand("eval", "score a classifier checkpoint on a dataset");
  std::string e_ckpt, e_data, e_betas = "2,5", e_out = "eval_out", e_pipeline = "eval";
  int e_k = 2, e_size = 32;
  ev->add_option("--checkpoint", e_ckpt, "classifier checkpoint directory")->required();
  ev->add_option("--data", e_data, "dataset split directory")->required();
  ev->add_option("--betas", e_betas, "comma-separated F-beta betas");
  ev->add_option("--k", e_k, "class count");
  ev->add_option("--size", e_size, "image side length");
  ev->add_option("--out", e_out, "output directory");
  ev->add_option("--pipeline", e_pipeline, "pipeline label for the report");

  // generate
  auto* gen = app.add_subcommand("generate", "sample images from a generator checkpoint");
  std::string g_ckpt, g_out = "gen_out";
  int g_n = 64, g_size = 32;
  std::uint64_t g_seed = 0;
  gen->add_option("--checkpoint", g_ckpt, "generator checkpoint directory")->required();
  gen->add_option("--n", g_n, "number of samples");
  gen->add_option("--seed", g_seed, "noise seed");
  gen->add_option("--out", g_out, "output directory");
  gen->add_option("--size", g_size, "image side length");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth_data(s_out, s_counts, s_size, s_seed, s_force);
    if (*train) return cmd_train(t_config, t_force, t_out, t_seed);
    if (*ev) return cmd_eval(e_ckpt, e_data, e_betas, e_k, e_size, e_out, e_pipeline);
    if (*gen) return cmd_generate(g_ckpt, g_n, g_seed, g_out, g_size);
  } catch (const NanGradientError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return 0;
}
