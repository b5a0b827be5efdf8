#pragma once

// Central finite-difference oracle for the autodiff suite. Runs in double so
// the 1e-3 relative tolerance is meaningful; independent of the backward
// implementations it checks.

#include <cmath>
#include <functional>
#include <vector>

#include "bssgan/tape.hpp"
#include "bssgan/tensor.hpp"

namespace gradcheck {

using bssgan::NodeId;
using bssgan::Tape;
using bssgan::Tensor;

// Builds a scalar loss from variable nodes registered for the given inputs.
// Must be deterministic: called many times with perturbed inputs.
using GraphFn = std::function<NodeId(Tape<double>&, const std::vector<NodeId>&)>;

struct Report {
  double max_rel_err = 0.0;
  int checked = 0;
};

inline double eval(const GraphFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tp;
  std::vector<NodeId> ids;
  for (const auto& t : inputs) ids.push_back(tp.variable(t));
  return tp.value(f(tp, ids)).item();
}

inline Report check(const GraphFn& f, std::vector<Tensor<double>> inputs,
                    double h = 1e-3) {
  Tape<double> tp;
  std::vector<NodeId> ids;
  for (const auto& t : inputs) ids.push_back(tp.variable(t));
  NodeId loss = f(tp, ids);
  tp.backward(loss);

  Report rep;
  for (std::size_t vi = 0; vi < inputs.size(); ++vi) {
    const Tensor<double>& analytic = tp.grad(ids[vi]);
    for (std::size_t i = 0; i < inputs[vi].numel(); ++i) {
      double keep = inputs[vi].data[i];
      inputs[vi].data[i] = keep + h;
      double up = eval(f, inputs);
      inputs[vi].data[i] = keep - h;
      double dn = eval(f, inputs);
      inputs[vi].data[i] = keep;
      double numeric = (up - dn) / (2.0 * h);
      double a = analytic.data[i];
      double scale = std::max(std::abs(a), std::abs(numeric));
      double err = scale < 1e-6 ? std::abs(a - numeric) : std::abs(a - numeric) / scale;
      rep.max_rel_err = std::max(rep.max_rel_err, err);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace gradcheck
