#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "bssgan/image_io.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

/// A rate with an explicit "undefined" state for zero denominators; extreme
/// imbalance makes empty cells likely, and a silent 0 would be misleading.
struct Rate {
  double value = 0.0;
  bool defined = false;
};

inline Rate make_rate(long num, long den) {
  if (den == 0) return {0.0, false};
  return {static_cast<double>(num) / static_cast<double>(den), true};
}

/// K x K counts; rows = true class, columns = predicted class.
struct ConfusionMatrix {
  int k = 0;
  std::vector<long> counts;  // row-major k*k

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int k_) : k(k_), counts(std::size_t(k_) * k_, 0) {
    check(k_ >= 2, "confusion matrix needs K >= 2");
  }

  long& at(int truth, int pred) { return counts[std::size_t(truth) * k + pred]; }
  long at(int truth, int pred) const { return counts[std::size_t(truth) * k + pred]; }

  long total() const {
    long n = 0;
    for (long c : counts) n += c;
    return n;
  }
  long row_sum(int truth) const {
    long n = 0;
    for (int p = 0; p < k; ++p) n += at(truth, p);
    return n;
  }
  long col_sum(int pred) const {
    long n = 0;
    for (int t = 0; t < k; ++t) n += at(t, pred);
    return n;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth,
                                 int k) {
  check(pred.size() == truth.size(), "prediction/truth length mismatch");
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check(truth[i] >= 0 && truth[i] < k, "true label out of range");
    check(pred[i] >= 0 && pred[i] < k, "predicted label out of range");
    ++cm.at(truth[i], pred[i]);
  }
  return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
  long diag = 0;
  for (int i = 0; i < cm.k; ++i) diag += cm.at(i, i);
  long n = cm.total();
  check(n > 0, "accuracy of an empty confusion matrix");
  return static_cast<double>(diag) / static_cast<double>(n);
}

inline std::vector<Rate> per_class_recall(const ConfusionMatrix& cm) {
  std::vector<Rate> out;
  for (int t = 0; t < cm.k; ++t) out.push_back(make_rate(cm.at(t, t), cm.row_sum(t)));
  return out;
}

/// Binary only; the damaged (minority) class 1 is positive.
inline std::pair<Rate, Rate> tpr_tnr(const ConfusionMatrix& cm) {
  check(cm.k == 2, "tpr/tnr are binary metrics");
  long tp = cm.at(1, 1), fn = cm.at(1, 0), tn = cm.at(0, 0), fp = cm.at(0, 1);
  return {make_rate(tp, tp + fn), make_rate(tn, tn + fp)};
}

/// Binary only; precision and recall of the positive (damaged) class.
inline std::pair<Rate, Rate> precision_recall(const ConfusionMatrix& cm) {
  check(cm.k == 2, "precision/recall are binary metrics here");
  long tp = cm.at(1, 1), fn = cm.at(1, 0), fp = cm.at(0, 1);
  return {make_rate(tp, tp + fp), make_rate(tp, tp + fn)};
}

/// (1+b^2) P R / (b^2 P + R); 0 when P = R = 0 by continuity.
inline double f_beta(double precision, double recall, double beta) {
  check(beta > 0.0, "beta must be positive");
  if (precision == 0.0 && recall == 0.0) return 0.0;
  double b2 = beta * beta;
  return (1 + b2) * precision * recall / (b2 * precision + recall);
}

inline std::vector<std::pair<double, double>> f_beta_sweep(const ConfusionMatrix& cm,
                                                           const std::vector<double>& betas) {
  auto [p, r] = precision_recall(cm);
  check(p.defined && r.defined, "f_beta sweep needs defined precision and recall");
  std::vector<std::pair<double, double>> out;
  for (double b : betas) out.emplace_back(b, f_beta(p.value, r.value, b));
  return out;
}

struct MetricsReport {
  std::string pipeline;
  std::string checkpoint;
  ConfusionMatrix cm;
  double acc = 0.0;
  Rate tpr, tnr, precision, recall;       // binary tasks only
  std::vector<Rate> recalls;              // per class, all tasks
  std::map<double, double> f;             // beta -> F_beta (binary tasks)
};

inline MetricsReport make_report(const std::string& pipeline, const std::string& checkpoint,
                                 const ConfusionMatrix& cm,
                                 const std::vector<double>& betas = {1, 2, 5}) {
  MetricsReport r;
  r.pipeline = pipeline;
  r.checkpoint = checkpoint;
  r.cm = cm;
  r.acc = accuracy(cm);
  r.recalls = per_class_recall(cm);
  if (cm.k == 2) {
    std::tie(r.tpr, r.tnr) = tpr_tnr(cm);
    std::tie(r.precision, r.recall) = precision_recall(cm);
    if (r.precision.defined && r.recall.defined)
      for (double b : betas) r.f[b] = f_beta(r.precision.value, r.recall.value, b);
  }
  return r;
}

namespace detail {

inline nlohmann::json rate_json(const Rate& r) {
  if (!r.defined) return nullptr;
  return r.value;
}

}  // namespace detail

inline nlohmann::json report_json(const MetricsReport& r) {
  nlohmann::json j;
  j["pipeline"] = r.pipeline;
  j["checkpoint"] = r.checkpoint;
  j["accuracy"] = r.acc;
  j["tpr"] = detail::rate_json(r.tpr);
  j["tnr"] = detail::rate_json(r.tnr);
  j["precision"] = detail::rate_json(r.precision);
  j["recall"] = detail::rate_json(r.recall);
  auto recalls = nlohmann::json::array();
  for (const auto& rc : r.recalls) recalls.push_back(detail::rate_json(rc));
  j["per_class_recall"] = recalls;
  nlohmann::json fj = nlohmann::json::object();
  for (const auto& [beta, v] : r.f) {
    std::ostringstream key;
    key << beta;
    fj[key.str()] = v;
  }
  j["f"] = fj;
  auto cm = nlohmann::json::array();
  for (int t = 0; t < r.cm.k; ++t) {
    auto row = nlohmann::json::array();
    for (int p = 0; p < r.cm.k; ++p) row.push_back(r.cm.at(t, p));
    cm.push_back(row);
  }
  j["cm"] = cm;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.pipeline = j.at("pipeline").get<std::string>();
  r.checkpoint = j.at("checkpoint").get<std::string>();
  r.acc = j.at("accuracy").get<double>();
  auto rate = [](const nlohmann::json& v) {
    return v.is_null() ? Rate{} : Rate{v.get<double>(), true};
  };
  r.tpr = rate(j.at("tpr"));
  r.tnr = rate(j.at("tnr"));
  r.precision = rate(j.at("precision"));
  r.recall = rate(j.at("recall"));
  for (const auto& v : j.at("per_class_recall")) r.recalls.push_back(rate(v));
  for (const auto& [key, v] : j.at("f").items()) r.f[std::stod(key)] = v.get<double>();
  const auto& cmj = j.at("cm");
  r.cm = ConfusionMatrix(static_cast<int>(cmj.size()));
  for (int t = 0; t < r.cm.k; ++t)
    for (int p = 0; p < r.cm.k; ++p) r.cm.at(t, p) = cmj[t][p].get<long>();
  return r;
}

/// Writes metrics.json, normalized cm.csv, fbeta_sweep.csv and (optionally)
/// an 8x8 generator sample grid PNG into out_dir.
inline void emit_report(const MetricsReport& r, const std::filesystem::path& out_dir,
                        const std::vector<double>& sweep_betas = {},
                        const Tensor<float>* samples = nullptr) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream os(out_dir / "metrics.json");
    check(os.good(), "cannot write " + (out_dir / "metrics.json").string());
    os << report_json(r).dump(2) << '\n';
  }
  {
    std::ofstream os(out_dir / "cm.csv");
    check(os.good(), "cannot write " + (out_dir / "cm.csv").string());
    os.precision(12);
    for (int t = 0; t < r.cm.k; ++t) {
      long n = r.cm.row_sum(t);
      for (int p = 0; p < r.cm.k; ++p) {
        if (p) os << ',';
        os << (n == 0 ? 0.0 : static_cast<double>(r.cm.at(t, p)) / n);
      }
      os << '\n';
    }
  }
  // the sweep is meaningless when the model never predicts the positive class
  if (!sweep_betas.empty() && r.cm.k == 2 && precision_recall(r.cm).first.defined &&
      precision_recall(r.cm).second.defined) {
    std::ofstream os(out_dir / "fbeta_sweep.csv");
    os.precision(12);
    os << "beta,f_beta\n";
    for (auto [b, v] : f_beta_sweep(r.cm, sweep_betas)) os << b << ',' << v << '\n';
  }
  if (samples) save_image(out_dir / "samples.png", tile_grid(*samples, 8, 8));
}

}  // namespace bssgan
