#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rdimkd/error.hpp"
#include "rdimkd/linalg.hpp"
#include "rdimkd/losses.hpp"
#include "rdimkd/matrix.hpp"
#include "rdimkd/rng.hpp"

namespace rdimkd {

// Row-vector convention throughout: a batch is B×in, a linear map is stored
// as an in×out weight and applied as X·W + b.

enum class Activation { ReLU, Identity, Softmax };

inline std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Identity: return "identity";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  for (auto a : {Activation::ReLU, Activation::Identity, Activation::Softmax})
    if (activation_name(a) == s) return a;
  throw Error(Errc::ParseError, "unknown activation '" + std::string(s) + "'");
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::ReLU;
  bool tap = false;
  std::optional<std::size_t> split_through;  // factor as f2∘f1 through this width; tap sits on f1

  std::size_t tap_dim() const noexcept { return split_through ? *split_through : out_dim; }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Affine map x ↦ x·w + b. `b` is 1×out; an empty b means no bias.
struct Affine {
  Matrix w;
  Matrix b;

  bool has_bias() const noexcept { return b.size() != 0; }
  friend bool operator==(const Affine&, const Affine&) = default;
};

inline Matrix apply(const Affine& f, const Matrix& x) {
  Matrix y = x * f.w;
  if (f.has_bias()) {
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += f.b(0, j);
  }
  return y;
}

struct Layer {
  LayerSpec spec;
  Matrix w;   // in×out, unsplit layers
  Matrix w1;  // in×t, split layers (no bias)
  Matrix w2;  // t×out, split layers
  Matrix b;   // 1×out

  bool split() const noexcept { return spec.split_through.has_value(); }
  friend bool operator==(const Layer&, const Layer&) = default;
};

struct TrainingMeta {
  int epochs = 0;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
  double final_test_accuracy = 0.0;
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct Network {
  std::vector<Layer> layers;
  std::uint64_t seed = 0;
  TrainingMeta meta;

  std::size_t input_dim() const { return layers.front().spec.in_dim; }
  std::size_t output_dim() const { return layers.back().spec.out_dim; }

  std::vector<std::size_t> tap_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].spec.tap) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> tap_dims() const {
    std::vector<std::size_t> out;
    for (const auto& l : layers)
      if (l.spec.tap) out.push_back(l.spec.tap_dim());
    return out;
  }

  /// Parameters in a fixed order: per layer, weight(s) then bias.
  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
      if (l.split()) {
        out.push_back(&l.w1);
        out.push_back(&l.w2);
      } else {
        out.push_back(&l.w);
      }
      out.push_back(&l.b);
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (auto* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
    return out;
  }

  friend bool operator==(const Network&, const Network&) = default;
};

inline void validate_specs(std::span<const LayerSpec> specs) {
  if (specs.empty()) throw Error(Errc::InvalidDims, "network needs at least one layer");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.in_dim == 0 || s.out_dim == 0) throw Error(Errc::InvalidDims, "layer " + std::to_string(i) + " has a zero dimension");
    if (i > 0 && specs[i - 1].out_dim != s.in_dim) {
      throw Error(Errc::InvalidDims, "layer " + std::to_string(i) + " input does not match previous output");
    }
    if (s.split_through && *s.split_through == 0) throw Error(Errc::InvalidDims, "split width must be >= 1");
    if (s.activation == Activation::Softmax && i + 1 != specs.size()) {
      throw Error(Errc::InvalidDims, "softmax is only allowed at the output layer");
    }
  }
}

inline void validate(const Network& net) {
  std::vector<LayerSpec> specs;
  for (const auto& l : net.layers) specs.push_back(l.spec);
  validate_specs(specs);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    const auto& s = l.spec;
    const bool ok = l.split() ? (l.w1.rows() == s.in_dim && l.w1.cols() == *s.split_through &&
                                 l.w2.rows() == *s.split_through && l.w2.cols() == s.out_dim && l.w.size() == 0)
                              : (l.w.rows() == s.in_dim && l.w.cols() == s.out_dim);
    if (!ok || l.b.rows() != 1 || l.b.cols() != s.out_dim) {
      throw Error(Errc::ShapeMismatch, "layer " + std::to_string(i) + " weights do not match its spec");
    }
  }
}

/// Gaussian init with std 1/√fan_in and zero biases, drawn layer by layer.
inline Network build_network(std::span<const LayerSpec> specs, std::uint64_t seed) {
  validate_specs(specs);
  SeededRng rng(seed);
  Network net;
  net.seed = seed;
  for (const auto& s : specs) {
    Layer l;
    l.spec = s;
    if (s.split_through) {
      const std::size_t t = *s.split_through;
      l.w1 = gaussian_matrix(rng, s.in_dim, t, 1.0 / std::sqrt(static_cast<double>(s.in_dim)));
      l.w2 = gaussian_matrix(rng, t, s.out_dim, 1.0 / std::sqrt(static_cast<double>(t)));
    } else {
      l.w = gaussian_matrix(rng, s.in_dim, s.out_dim, 1.0 / std::sqrt(static_cast<double>(s.in_dim)));
    }
    l.b = Matrix(1, s.out_dim);
    net.layers.push_back(std::move(l));
  }
  return net;
}

/// MLP with ReLU hidden layers and a softmax head.
inline std::vector<LayerSpec> mlp_specs(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes) {
  std::vector<LayerSpec> specs;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    specs.push_back({in, h, Activation::ReLU, false, std::nullopt});
    in = h;
  }
  specs.push_back({in, classes, Activation::Softmax, false, std::nullopt});
  return specs;
}

// ---------------------------------------------------------------------------
// Forward / backward

struct ForwardResult {
  Matrix logits;
  Matrix probs;  // row-wise softmax of logits when the head is softmax; empty otherwise
  std::vector<Matrix> taps;
};

namespace detail {

struct LayerCache {
  Matrix input;
  Matrix mid;  // f1 output for split layers
  Matrix pre;  // pre-activation
  Matrix out;  // post-activation
};

inline void add_bias(Matrix& y, const Matrix& b) {
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b(0, j);
}

inline std::vector<LayerCache> forward_cached(const Network& net, const Matrix& batch) {
  if (net.layers.empty()) throw Error(Errc::InvalidDims, "empty network");
  if (batch.cols() != net.input_dim()) {
    throw Error(Errc::ShapeMismatch, "batch width " + std::to_string(batch.cols()) + " != input dim " +
                                         std::to_string(net.input_dim()));
  }
  std::vector<LayerCache> cache(net.layers.size());
  const Matrix* x = &batch;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    LayerCache& c = cache[li];
    c.input = *x;
    if (l.split()) {
      c.mid = c.input * l.w1;
      c.pre = c.mid * l.w2;
    } else {
      c.pre = c.input * l.w;
    }
    add_bias(c.pre, l.b);
    c.out = c.pre;
    if (l.spec.activation == Activation::ReLU)
      for (double& v : c.out.data()) v = v > 0.0 ? v : 0.0;
    x = &c.out;
  }
  return cache;
}

}  // namespace detail

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = softmax(logits.row(i));
    std::copy(row.begin(), row.end(), p.row(i).begin());
  }
  return p;
}

inline ForwardResult forward(const Network& net, const Matrix& batch) {
  auto cache = detail::forward_cached(net, batch);
  ForwardResult r;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    if (l.spec.tap) r.taps.push_back(l.split() ? cache[li].mid : cache[li].out);
  }
  r.logits = std::move(cache.back().out);
  if (net.layers.back().spec.activation == Activation::Softmax) r.probs = softmax_rows(r.logits);
  return r;
}

/// Gradients aligned with Network::parameters().
using Gradients = std::vector<Matrix>;

/// Exact parameter gradients of (logit loss + Σ tap losses), given the
/// derivative of the loss with respect to the logits and, per tap in layer
/// order, the derivative with respect to that tap's features (an empty
/// matrix means the tap contributes nothing).
inline Gradients backward(const Network& net, const Matrix& batch, const Matrix& logit_grad,
                          std::span<const Matrix> tap_grads) {
  const auto cache = detail::forward_cached(net, batch);
  const auto taps = net.tap_indices();
  if (tap_grads.size() != taps.size()) {
    throw Error(Errc::ShapeMismatch, std::to_string(tap_grads.size()) + " tap grads for " + std::to_string(taps.size()) + " taps");
  }
  if (logit_grad.rows() != batch.rows() || logit_grad.cols() != net.output_dim()) {
    throw Error(Errc::ShapeMismatch, "logit grad " + logit_grad.shape_str());
  }
  std::vector<const Matrix*> tap_grad_at(net.layers.size(), nullptr);
  for (std::size_t t = 0; t < taps.size(); ++t) {
    if (tap_grads[t].size() == 0) continue;
    const auto& c = cache[taps[t]];
    const Matrix& feat = net.layers[taps[t]].split() ? c.mid : c.out;
    if (!tap_grads[t].same_shape(feat)) {
      throw Error(Errc::ShapeMismatch, "tap " + std::to_string(t) + " grad " + tap_grads[t].shape_str() + " vs " +
                                           feat.shape_str());
    }
    tap_grad_at[taps[t]] = &tap_grads[t];
  }

  Gradients grads(net.parameters().size());
  std::size_t slot = grads.size();

  Matrix g = logit_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& l = net.layers[li];
    const auto& c = cache[li];
    if (!l.split() && tap_grad_at[li]) g += *tap_grad_at[li];
    Matrix dz = std::move(g);
    if (l.spec.activation == Activation::ReLU) {
      for (std::size_t k = 0; k < dz.size(); ++k)
        if (!(c.pre.data()[k] > 0.0)) dz.data()[k] = 0.0;
    }
    Matrix db(1, dz.cols());
    for (std::size_t i = 0; i < dz.rows(); ++i)
      for (std::size_t j = 0; j < dz.cols(); ++j) db(0, j) += dz(i, j);

    grads[--slot] = std::move(db);
    if (l.split()) {
      grads[--slot] = matmul_tn(c.mid, dz);
      Matrix gmid = matmul_nt(dz, l.w2);
      if (tap_grad_at[li]) gmid += *tap_grad_at[li];
      grads[--slot] = matmul_tn(c.input, gmid);
      if (li > 0) g = matmul_nt(gmid, l.w1);
    } else {
      grads[--slot] = matmul_tn(c.input, dz);
      if (li > 0) g = matmul_nt(dz, l.w);
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Split / merge of a linear layer through an intermediate width.

struct SplitLinear {
  Affine f1;  // in×t, no bias
  Affine f2;  // t×out, carries the original bias
};

/// Factor shapes for `layer` through width t with fresh seeded weights.
inline SplitLinear split_linear(const Affine& layer, std::size_t t, SeededRng& rng) {
  if (t == 0) throw Error(Errc::InvalidDims, "split width must be >= 1");
  const std::size_t p = layer.w.rows(), q = layer.w.cols();
  SplitLinear s;
  s.f1.w = gaussian_matrix(rng, p, t, 1.0 / std::sqrt(static_cast<double>(p)));
  s.f2.w = gaussian_matrix(rng, t, q, 1.0 / std::sqrt(static_cast<double>(t)));
  s.f2.b = layer.has_bias() ? layer.b : Matrix(1, q);
  return s;
}

/// Single affine map equal to f2∘f1: W = W1·W2, b = b1·W2 + b2.
inline Affine merge_linear(const Affine& f1, const Affine& f2) {
  if (f1.w.cols() != f2.w.rows()) {
    throw Error(Errc::ShapeMismatch, "cannot merge " + f1.w.shape_str() + " with " + f2.w.shape_str());
  }
  Affine m;
  m.w = f1.w * f2.w;
  m.b = f1.has_bias() ? f1.b * f2.w : Matrix(1, f2.w.cols());
  if (f2.has_bias()) m.b += f2.b;
  return m;
}

/// Collapse every split layer into a single linear layer for inference.
inline Network merge_splits(const Network& net) {
  Network out = net;
  for (auto& l : out.layers) {
    if (!l.split()) continue;
    Affine merged = merge_linear(Affine{l.w1, Matrix()}, Affine{l.w2, l.b});
    l.w = std::move(merged.w);
    l.b = std::move(merged.b);
    l.w1 = Matrix();
    l.w2 = Matrix();
    l.spec.split_through.reset();
    l.spec.tap = false;
  }
  return out;
}

/// Copy every student layer whose weight shapes match the same-index teacher
/// layer exactly. Returns the indices copied.
inline std::vector<std::size_t> inherit_init(Network& student, const Network& teacher) {
  std::vector<std::size_t> copied;
  for (std::size_t i = 0; i < std::min(student.layers.size(), teacher.layers.size()); ++i) {
    Layer& s = student.layers[i];
    const Layer& t = teacher.layers[i];
    if (s.split() != t.split() || !s.b.same_shape(t.b)) continue;
    const bool match = s.split() ? (s.w1.same_shape(t.w1) && s.w2.same_shape(t.w2)) : s.w.same_shape(t.w);
    if (!match) continue;
    s.w = t.w;
    s.w1 = t.w1;
    s.w2 = t.w2;
    s.b = t.b;
    copied.push_back(i);
  }
  return copied;
}

// ---------------------------------------------------------------------------
// Checkpoint text format.

inline void write_network(std::ostream& os, const Network& net) {
  os << "rdimkd-network 1\n";
  os << "seed " << net.seed << '\n';
  os << "meta " << net.meta.epochs << ' ' << format_double(net.meta.final_train_loss) << ' '
     << format_double(net.meta.final_train_accuracy) << ' ' << format_double(net.meta.final_test_accuracy) << '\n';
  os << "layers " << net.layers.size() << '\n';
  for (const auto& l : net.layers) {
    os << "layer " << l.spec.in_dim << ' ' << l.spec.out_dim << ' ' << activation_name(l.spec.activation) << ' '
       << (l.spec.tap ? 1 : 0) << ' ' << (l.spec.split_through ? *l.spec.split_through : 0) << '\n';
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (l.split()) {
      os << "w1 " << i << '\n';
      write_matrix(os, l.w1);
      os << "w2 " << i << '\n';
      write_matrix(os, l.w2);
    } else {
      os << "w " << i << '\n';
      write_matrix(os, l.w);
    }
    os << "b " << i << '\n';
    write_matrix(os, l.b);
  }
}

inline Network read_network(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) throw Error(Errc::ParseError, "checkpoint: expected '" + word + "', got '" + tok + "'");
  };
  auto read_double = [&] {
    std::string tok;
    if (!(is >> tok)) throw Error(Errc::ParseError, "checkpoint truncated");
    return parse_double(tok);
  };
  expect("rdimkd-network");
  int version = 0;
  if (!(is >> version) || version != 1) throw Error(Errc::ParseError, "unsupported checkpoint version");
  Network net;
  expect("seed");
  if (!(is >> net.seed)) throw Error(Errc::ParseError, "checkpoint: bad seed");
  expect("meta");
  if (!(is >> net.meta.epochs)) throw Error(Errc::ParseError, "checkpoint: bad meta");
  net.meta.final_train_loss = read_double();
  net.meta.final_train_accuracy = read_double();
  net.meta.final_test_accuracy = read_double();
  expect("layers");
  std::size_t n = 0;
  if (!(is >> n) || n == 0) throw Error(Errc::ParseError, "checkpoint: bad layer count");
  net.layers.resize(n);
  for (auto& l : net.layers) {
    expect("layer");
    std::string act;
    int tap = 0;
    std::size_t split = 0;
    if (!(is >> l.spec.in_dim >> l.spec.out_dim >> act >> tap >> split)) throw Error(Errc::ParseError, "checkpoint: bad layer line");
    l.spec.activation = parse_activation(act);
    l.spec.tap = tap != 0;
    if (split) l.spec.split_through = split;
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto& l = net.layers[i];
    auto block = [&](const std::string& name) {
      expect(name);
      std::size_t idx = 0;
      if (!(is >> idx) || idx != i) throw Error(Errc::ParseError, "checkpoint: block index mismatch for " + name);
      return read_matrix(is);
    };
    if (l.split()) {
      l.w1 = block("w1");
      l.w2 = block("w2");
    } else {
      l.w = block("w");
    }
    l.b = block("b");
  }
  validate(net);
  return net;
}

}  // namespace rdimkd
