#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bssgan/ops.hpp"
#include "bssgan/tape.hpp"

namespace bssgan {

/// Scalar objective plus its named sub-terms; the scalar always equals the
/// sum of the components.
template <class T>
struct LossValue {
  NodeId node = -1;
  T value = 0;
  std::vector<std::pair<std::string, T>> components;

  T component(const std::string& name) const {
    for (const auto& [n, v] : components)
      if (n == name) return v;
    throw std::invalid_argument("no loss component named " + name);
  }
};

namespace detail {

template <class T>
LossValue<T> make_loss(Tape<T>& tp, NodeId node,
                       std::vector<std::pair<std::string, T>> components) {
  LossValue<T> lv;
  lv.node = node;
  lv.value = tp.value(node).item();
  lv.components = std::move(components);
  return lv;
}

template <class T>
void check_probs(const Tape<T>& tp, NodeId p, const char* who) {
  const Tensor<T>& v = tp.value(p);
  check(v.rank() == 2, std::string(who) + ": probabilities must be (N, C)");
  check(v.dim(0) > 0, std::string(who) + ": empty batch");
}

}  // namespace detail

/// -mean ln(1 - p_synth) over real rows  -  mean ln(p_synth) over generated
/// rows; p_synth is the last column of the (K+1)-way probability vector.
template <class T>
LossValue<T> d_unsupervised(Tape<T>& tp, NodeId p_real, NodeId p_gen) {
  detail::check_probs(tp, p_real, "d_unsupervised");
  detail::check_probs(tp, p_gen, "d_unsupervised");
  int synth = tp.value(p_real).dim(1) - 1;
  check(tp.value(p_gen).dim(1) == synth + 1, "d_unsupervised: class-count mismatch");
  NodeId real_term = neg_mean(tp, log_clamped(tp, one_minus(tp, select_col(tp, p_real, synth))));
  NodeId gen_term = neg_mean(tp, log_clamped(tp, select_col(tp, p_gen, synth)));
  NodeId total = add(tp, real_term, gen_term);
  return detail::make_loss(tp, total,
                           {{"real", tp.value(real_term).item()},
                            {"generated", tp.value(gen_term).item()}});
}

/// Cross entropy over the K real classes for labeled rows. By default the
/// probability is conditioned on "not synthetic", i.e. -mean ln(p_y / (1 -
/// p_synth)); conditional=false gives the plain -mean ln(p_y) variant.
template <class T>
LossValue<T> d_supervised(Tape<T>& tp, NodeId p, const std::vector<int>& labels,
                          bool conditional = true) {
  detail::check_probs(tp, p, "d_supervised");
  int classes = tp.value(p).dim(1);
  int k = classes - 1;
  for (int y : labels)
    check(y >= 0 && y < k, "d_supervised: label must name one of the K real classes");
  NodeId ln_py = log_clamped(tp, gather_cols(tp, p, labels));
  NodeId term = ln_py;
  if (conditional) {
    NodeId ln_denom = log_clamped(tp, one_minus(tp, select_col(tp, p, k)));
    term = sub(tp, ln_py, ln_denom);
  }
  NodeId total = neg_mean(tp, term);
  return detail::make_loss(tp, total, {{"supervised", tp.value(total).item()}});
}

/// Full discriminator objective: unsupervised term over all real rows
/// (labeled rows first), supervised term over the labeled rows, generated
/// term over the synthetic rows.
template <class T>
LossValue<T> d_total(Tape<T>& tp, NodeId p_real, const std::vector<int>& labels,
                     NodeId p_gen, bool conditional = true) {
  int n_real = tp.value(p_real).dim(0);
  int n_l = static_cast<int>(labels.size());
  check(n_l > 0 && n_l <= n_real,
        "d_total: labeled count must be positive and fit the real batch");
  LossValue<T> us = d_unsupervised(tp, p_real, p_gen);
  NodeId p_labeled = n_l == n_real ? p_real : slice_rows(tp, p_real, 0, n_l);
  LossValue<T> sup = d_supervised(tp, p_labeled, labels, conditional);
  NodeId total = add(tp, us.node, sup.node);
  return detail::make_loss(tp, total,
                           {{"unsupervised", us.value}, {"supervised", sup.value}});
}

/// Non-saturating generator loss: -mean ln(1 - p_synth(G(z))).
template <class T>
LossValue<T> g_heuristic(Tape<T>& tp, NodeId p_gen) {
  detail::check_probs(tp, p_gen, "g_heuristic");
  int synth = tp.value(p_gen).dim(1) - 1;
  NodeId total = neg_mean(tp, log_clamped(tp, one_minus(tp, select_col(tp, p_gen, synth))));
  return detail::make_loss(tp, total, {{"heuristic", tp.value(total).item()}});
}

/// Squared L2 distance between mean real and mean generated features.
template <class T>
LossValue<T> g_feature_matching(Tape<T>& tp, NodeId f_real, NodeId f_gen) {
  check(tp.value(f_real).rank() == 2 && tp.value(f_gen).rank() == 2,
        "g_feature_matching: features must be (N, width)");
  check(tp.value(f_real).dim(1) == tp.value(f_gen).dim(1),
        "g_feature_matching: feature width mismatch");
  NodeId diff = sub(tp, mean_rows(tp, f_real), mean_rows(tp, f_gen));
  NodeId total = sq_sum(tp, diff);
  return detail::make_loss(tp, total, {{"feature_matching", tp.value(total).item()}});
}

/// Full generator objective: feature matching plus the heuristic term.
template <class T>
LossValue<T> g_total(Tape<T>& tp, NodeId f_real, NodeId f_gen, NodeId p_gen) {
  LossValue<T> fm = g_feature_matching(tp, f_real, f_gen);
  LossValue<T> h = g_heuristic(tp, p_gen);
  NodeId total = add(tp, fm.node, h.node);
  return detail::make_loss(tp, total,
                           {{"heuristic", h.value}, {"feature_matching", fm.value}});
}

/// Two-player minimax losses for the ordinary GAN, expressed through the
/// (K+1)-way convention D(x) = 1 - p_synth(x); with a 2-way discriminator
/// this is exactly the classic formulation.
template <class T>
std::pair<LossValue<T>, LossValue<T>> ordinary_gan_losses(Tape<T>& tp, NodeId p_real,
                                                          NodeId p_gen) {
  LossValue<T> d = d_unsupervised(tp, p_real, p_gen);
  LossValue<T> g = g_heuristic(tp, p_gen);
  return {d, g};
}

/// alpha_i = N_total / count_i.
inline std::vector<double> reverse_frequency_weights(const std::vector<long>& counts) {
  long total = 0;
  for (long c : counts) {
    check(c > 0, "reverse_frequency_weights: class with zero count");
    total += c;
  }
  std::vector<double> alpha(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i)
    alpha[i] = static_cast<double>(total) / static_cast<double>(counts[i]);
  return alpha;
}

/// -mean alpha_y ln(p_y) over the batch.
template <class T>
LossValue<T> balanced_cross_entropy(Tape<T>& tp, NodeId p, const std::vector<int>& labels,
                                    const std::vector<double>& alpha) {
  detail::check_probs(tp, p, "balanced_cross_entropy");
  int k = tp.value(p).dim(1);
  check(static_cast<int>(alpha.size()) == k, "balanced_cross_entropy: weight count mismatch");
  for (double a : alpha) check(a > 0, "balanced_cross_entropy: weights must be positive");
  Tensor<T> w({static_cast<int>(labels.size())});
  for (std::size_t i = 0; i < labels.size(); ++i) w.data[i] = static_cast<T>(alpha.at(labels[i]));
  NodeId weighted = mul(tp, tp.constant(std::move(w)),
                        log_clamped(tp, gather_cols(tp, p, labels)));
  NodeId total = neg_mean(tp, weighted);
  return detail::make_loss(tp, total, {{"balanced_ce", tp.value(total).item()}});
}

/// -mean alpha_y (1 - p_y)^gamma ln(p_y); gamma = 0 reduces to balanced CE.
template <class T>
LossValue<T> focal_loss(Tape<T>& tp, NodeId p, const std::vector<int>& labels,
                        const std::vector<double>& alpha, double gamma) {
  check(gamma >= 0, "focal_loss: gamma must be non-negative");
  detail::check_probs(tp, p, "focal_loss");
  int k = tp.value(p).dim(1);
  check(static_cast<int>(alpha.size()) == k, "focal_loss: weight count mismatch");
  Tensor<T> w({static_cast<int>(labels.size())});
  for (std::size_t i = 0; i < labels.size(); ++i) w.data[i] = static_cast<T>(alpha.at(labels[i]));
  NodeId py = gather_cols(tp, p, labels);
  NodeId focus = pow_const(tp, one_minus(tp, py), T(gamma));
  NodeId weighted = mul(tp, tp.constant(std::move(w)), mul(tp, focus, log_clamped(tp, py)));
  NodeId total = neg_mean(tp, weighted);
  return detail::make_loss(tp, total, {{"focal", tp.value(total).item()}});
}

}  // namespace bssgan
