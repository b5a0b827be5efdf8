#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bssgan/ops.hpp"
#include "bssgan/rng.hpp"
#include "bssgan/tape.hpp"
#include "bssgan/tensor.hpp"

namespace bssgan {

inline constexpr const char* kRunningPrefix = "running/";
inline constexpr const char* kAdamPrefix = "adam/";

/// Named, ordered tensor store for a network's kernels, biases, BN affine
/// parameters and running statistics.
template <class T>
class ParamStore {
 public:
  void insert(const std::string& name, Tensor<T> t) {
    check(by_name_.find(name) == by_name_.end(), "duplicate parameter " + name);
    order_.push_back(name);
    by_name_.emplace(name, std::move(t));
  }

  Tensor<T>& at(const std::string& name) {
    auto it = by_name_.find(name);
    check(it != by_name_.end(), "unknown parameter " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = by_name_.find(name);
    check(it != by_name_.end(), "unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  const std::vector<std::string>& names() const { return order_; }

  /// Names that receive gradients (running stats excluded).
  std::vector<std::string> trainable() const {
    std::vector<std::string> out;
    for (const auto& n : order_)
      if (n.rfind(kRunningPrefix, 0) != 0) out.push_back(n);
    return out;
  }

  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor<T>> by_name_;
};

using Params = ParamStore<float>;

enum class LayerKind { kConv, kDeconv, kBatchNorm, kDropout, kDense, kFlatten, kReshape };
enum class Act { kNone, kLeakyRelu, kRelu, kTanh, kSoftmax };

struct LayerDesc {
  LayerKind kind;
  std::string name;       // parameter prefix, empty for parameterless layers
  int filters = 0;        // conv/deconv/dense output width
  int stride = 1;
  Act act = Act::kNone;
  double rate = 0.0;      // dropout
  double momentum = 0.8;  // batch norm
  double alpha = 0.2;     // leaky relu slope
  Shape reshape_to;       // per-sample shape for kReshape
};

/// Declarative layer stack plus the input/output contract.
struct NetworkSpec {
  std::vector<LayerDesc> layers;
  int input_size = 0;    // spatial side for image inputs, vector width otherwise
  int in_channels = 0;   // 0 for vector inputs
  int output_dim = 0;    // C for classifiers, image side for the generator
  std::string role;      // "discriminator" | "generator"
  int feature_layer = -1;  // flatten index whose ReLU is the matching feature

  /// Stable FNV-1a hash of the layer descriptors; stored in checkpoints so a
  /// mismatched load is rejected instead of silently misread.
  std::uint64_t fingerprint() const {
    std::ostringstream os;
    os << role << '|' << input_size << '|' << in_channels << '|' << output_dim;
    for (const auto& l : layers) {
      os << ';' << static_cast<int>(l.kind) << ',' << l.name << ',' << l.filters << ','
         << l.stride << ',' << static_cast<int>(l.act) << ',' << l.rate << ','
         << l.momentum << ',' << l.alpha;
      for (int d : l.reshape_to) os << ':' << d;
    }
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : os.str()) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

/// Classifier / discriminator stack. C = K+1 when semi_supervised (the extra
/// class scores "synthetic"), C = K otherwise.
inline NetworkSpec discriminator_spec(int k, bool semi_supervised, int input_size = 128,
                                      int in_channels = 3) {
  check(k >= 2, "discriminator requires K >= 2");
  check(input_size % 4 == 0, "discriminator input size must be divisible by 4");
  NetworkSpec s;
  s.role = "discriminator";
  s.input_size = input_size;
  s.in_channels = in_channels;
  s.output_dim = semi_supervised ? k + 1 : k;
  s.layers = {
      {LayerKind::kConv, "conv1", 32, 2, Act::kLeakyRelu},
      {LayerKind::kDropout, "", 0, 1, Act::kNone, 0.25},
      {LayerKind::kConv, "conv2", 64, 2, Act::kLeakyRelu},
      {LayerKind::kBatchNorm, "bn1"},
      {LayerKind::kDropout, "", 0, 1, Act::kNone, 0.25},
      {LayerKind::kConv, "conv3", 64, 1, Act::kLeakyRelu},
      {LayerKind::kFlatten},
      {LayerKind::kDense, "fc", s.output_dim, 1, Act::kSoftmax},
  };
  s.feature_layer = 6;  // the flatten layer
  return s;
}

/// Generator stack: dense from noise to a (out/4, out/4, 128) grid, two
/// stride-2 deconvolutions, one stride-1 deconvolution with tanh output.
inline NetworkSpec generator_spec(int out_size, int noise_dim = 100) {
  check(out_size % 4 == 0, "generator output size must be divisible by 4");
  int base = out_size / 4;
  NetworkSpec s;
  s.role = "generator";
  s.input_size = noise_dim;
  s.in_channels = 0;
  s.output_dim = out_size;
  s.layers = {
      {LayerKind::kDense, "fc", base * base * 128, 1, Act::kRelu},
      {LayerKind::kReshape, "", 0, 1, Act::kNone, 0, 0.8, 0.2, {base, base, 128}},
      {LayerKind::kDeconv, "deconv1", 64, 2, Act::kRelu},
      {LayerKind::kBatchNorm, "gbn1"},
      {LayerKind::kDeconv, "deconv2", 3, 2, Act::kRelu},
      {LayerKind::kBatchNorm, "gbn2"},
      {LayerKind::kDeconv, "deconv3", 3, 1, Act::kTanh},
  };
  return s;
}

namespace detail {

template <class T>
Tensor<T> xavier_uniform(const Shape& shape, int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> t(shape);
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace detail

/// Xavier-uniform kernels/weights, zero biases, unit-gamma BN, fresh running
/// stats. Channel bookkeeping walks the layer list the same way forward does.
template <class T>
ParamStore<T> init_xavier(const NetworkSpec& spec, Rng& rng) {
  ParamStore<T> ps;
  int ch = spec.in_channels;        // current channel count (image path)
  int side = spec.input_size;       // current spatial side
  int width = spec.in_channels == 0 ? spec.input_size : 0;  // vector width
  for (const auto& l : spec.layers) {
    switch (l.kind) {
      case LayerKind::kConv: {
        int fan_in = 3 * 3 * ch, fan_out = 3 * 3 * l.filters;
        ps.insert(l.name + "/w", detail::xavier_uniform<T>({3, 3, ch, l.filters}, fan_in, fan_out, rng));
        ps.insert(l.name + "/b", Tensor<T>({l.filters}, T(0)));
        ch = l.filters;
        side = (side + l.stride - 1) / l.stride;
        break;
      }
      case LayerKind::kDeconv: {
        int fan_in = 3 * 3 * ch, fan_out = 3 * 3 * l.filters;
        ps.insert(l.name + "/w", detail::xavier_uniform<T>({3, 3, l.filters, ch}, fan_in, fan_out, rng));
        ps.insert(l.name + "/b", Tensor<T>({l.filters}, T(0)));
        ch = l.filters;
        side = side * l.stride;
        break;
      }
      case LayerKind::kBatchNorm:
        ps.insert(l.name + "/gamma", Tensor<T>({ch}, T(1)));
        ps.insert(l.name + "/beta", Tensor<T>({ch}, T(0)));
        ps.insert(std::string(kRunningPrefix) + l.name + "/mean", Tensor<T>({ch}, T(0)));
        ps.insert(std::string(kRunningPrefix) + l.name + "/var", Tensor<T>({ch}, T(1)));
        break;
      case LayerKind::kDense: {
        int in = width > 0 ? width : side * side * ch;
        ps.insert(l.name + "/w", detail::xavier_uniform<T>({in, l.filters}, in, l.filters, rng));
        ps.insert(l.name + "/b", Tensor<T>({l.filters}, T(0)));
        width = l.filters;
        break;
      }
      case LayerKind::kReshape:
        width = 0;
        side = l.reshape_to[0];
        ch = l.reshape_to[2];
        break;
      case LayerKind::kFlatten:
        width = side * side * ch;
        break;
      case LayerKind::kDropout:
        break;
    }
  }
  return ps;
}

template <class T>
struct ForwardResult {
  NodeId out = -1;       // network output (probabilities for classifiers)
  NodeId features = -1;  // ReLU(flatten(last conv)) when the spec marks one
  NodeId logits = -1;    // pre-softmax output for classifiers
};

/// Runs the layer stack on the tape. Parameters are registered as named tape
/// variables; pass train_params=false to freeze them (their gradients are
/// then neither computed nor returned).
template <class T>
ForwardResult<T> forward(Tape<T>& tp, const NetworkSpec& spec, ParamStore<T>& ps,
                         NodeId x, Mode mode, Rng& rng, bool train_params = true) {
  ForwardResult<T> res;
  auto pvar = [&](const std::string& name) {
    return tp.variable(ps.at(name), name, train_params);
  };
  NodeId h = x;
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& l = spec.layers[li];
    switch (l.kind) {
      case LayerKind::kConv:
        h = conv2d(tp, h, pvar(l.name + "/w"), pvar(l.name + "/b"), l.stride);
        break;
      case LayerKind::kDeconv:
        h = transposed_conv2d(tp, h, pvar(l.name + "/w"), pvar(l.name + "/b"), l.stride);
        break;
      case LayerKind::kBatchNorm: {
        BnRunning<T> run{&ps.at(std::string(kRunningPrefix) + l.name + "/mean"),
                         &ps.at(std::string(kRunningPrefix) + l.name + "/var")};
        h = batch_norm(tp, h, pvar(l.name + "/gamma"), pvar(l.name + "/beta"), run,
                       T(l.momentum), mode);
        break;
      }
      case LayerKind::kDropout:
        h = dropout(tp, h, l.rate, mode, rng);
        break;
      case LayerKind::kDense:
        h = dense(tp, h, pvar(l.name + "/w"), pvar(l.name + "/b"));
        break;
      case LayerKind::kFlatten:
        h = flatten(tp, h);
        if (static_cast<int>(li) == spec.feature_layer) res.features = relu(tp, h);
        break;
      case LayerKind::kReshape: {
        Shape s = l.reshape_to;
        s.insert(s.begin(), tp.value(h).dim(0));
        h = reshape(tp, h, s);
        break;
      }
    }
    switch (l.act) {
      case Act::kLeakyRelu: h = leaky_relu(tp, h, T(l.alpha)); break;
      case Act::kRelu: h = relu(tp, h); break;
      case Act::kTanh: h = tanh_act(tp, h); break;
      case Act::kSoftmax:
        res.logits = h;
        h = softmax(tp, h);
        break;
      case Act::kNone: break;
    }
  }
  res.out = h;
  return res;
}

/// ReLU(flatten(last conv activation)) with dropout off; the feature map used
/// by the feature-matching loss, exposed standalone for evaluation.
template <class T>
Tensor<T> discriminator_features(const NetworkSpec& spec, ParamStore<T>& ps,
                                 const Tensor<T>& x) {
  Tape<T> tp;
  Rng rng(0);
  NodeId xn = tp.constant(x);
  auto res = forward(tp, spec, ps, xn, Mode::kInfer, rng, false);
  check(res.features >= 0, "network spec has no feature layer");
  return tp.value(res.features);
}

/// Class prediction: argmax over the first K entries of the output row.
template <class T>
std::vector<int> predict(const NetworkSpec& spec, ParamStore<T>& ps, const Tensor<T>& x,
                         int k) {
  Tape<T> tp;
  Rng rng(0);
  NodeId xn = tp.constant(x);
  auto res = forward(tp, spec, ps, xn, Mode::kInfer, rng, false);
  const Tensor<T>& p = tp.value(res.out);
  int c = p.dim(1);
  check(k <= c, "predict: K exceeds output width");
  std::vector<int> out(p.dim(0));
  for (int r = 0; r < p.dim(0); ++r) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (p.data[std::size_t(r) * c + j] > p.data[std::size_t(r) * c + best]) best = j;
    out[r] = best;
  }
  return out;
}

}  // namespace bssgan
