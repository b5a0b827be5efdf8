#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "bssgan/tensor.hpp"

namespace bssgan {

/// Bias-corrected Adam. Moment tensors are keyed by parameter name and
/// created lazily with the parameter's shape on first use.
template <class T>
struct AdamState {
  std::map<std::string, Tensor<T>> m;
  std::map<std::string, Tensor<T>> v;
  long t = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

struct NanGradientError : std::runtime_error {
  explicit NanGradientError(const std::string& name)
      : std::runtime_error("non-finite gradient for parameter '" + name + "'") {}
};

/// One Adam step over the given (param, grad) pairs. Aborts without touching
/// any parameter if a gradient contains NaN/Inf.
template <class T, class Params>
void adam_step(Params& params, const std::map<std::string, Tensor<T>>& grads,
               AdamState<T>& state, T lr) {
  for (const auto& [name, g] : grads) {
    if (!all_finite(g)) throw NanGradientError(name);
  }
  state.t += 1;
  T bc1 = T(1) - std::pow(state.beta1, T(state.t));
  T bc2 = T(1) - std::pow(state.beta2, T(state.t));
  for (const auto& [name, g] : grads) {
    Tensor<T>& p = params.at(name);
    check(p.shape == g.shape, "adam_step: gradient shape mismatch for " + name);
    auto mi = state.m.find(name);
    if (mi == state.m.end()) {
      mi = state.m.emplace(name, Tensor<T>(p.shape)).first;
      state.v.emplace(name, Tensor<T>(p.shape));
    }
    Tensor<T>& m = mi->second;
    Tensor<T>& v = state.v.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (T(1) - state.beta1) * g.data[i];
      v.data[i] = state.beta2 * v.data[i] + (T(1) - state.beta2) * g.data[i] * g.data[i];
      T mhat = m.data[i] / bc1;
      T vhat = v.data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace bssgan
