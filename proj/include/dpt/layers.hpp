#pragma once

#include <string>

#include "dpt/ops.hpp"
#include "dpt/rng.hpp"
#include "dpt/tensor.hpp"

namespace dpt {

// A trainable tensor with its accumulated gradient.  `decay` marks whether
// weight decay applies (biases, norm affines, positional tables and the
// scale-head bias are excluded).
template <class T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool decay = true;

  void init_shape(std::string n, Shape shape, bool wd) {
    name = std::move(n);
    value = TensorT<T>(shape);
    grad = TensorT<T>(std::move(shape));
    decay = wd;
  }
  void zero_grad() { grad.fill(T(0)); }
};

// Fills p.value with draws from an independent stream derived from the
// parameter's name, so a parameter's initial values depend only on
// (seed, name, mode) and never on what other parameters exist.
enum class InitKind { Zero, TruncNormal };

uint64_t name_stream(const std::string& name);

template <class T>
void init_param(ParamT<T>& p, const Rng& base, InitKind kind, double std = 0.02);

// y = x @ W + b over the last axis; leading axes are batch rows.
// W is stored [in, out].
template <class T>
class LinearT {
 public:
  LinearT() = default;
  LinearT(std::string name, int64_t in, int64_t out, bool bias = true);

  TensorT<T> forward(const TensorT<T>& x);
  // Accumulates dW (and db) into the params and returns dx.  Requires a
  // forward cache; consuming it twice is a state error.
  TensorT<T> backward(const TensorT<T>& gy);

  // Draws the weight from the parameter's own stream; the bias stays zero.
  void init_weight(const Rng& base, InitKind kind, double std = 0.02);

  int64_t in_features() const { return in_; }
  int64_t out_features() const { return out_; }
  bool has_bias() const { return bias_; }
  ParamT<T>& w() { return w_; }
  ParamT<T>& b() { return b_; }
  const ParamT<T>& w() const { return w_; }
  const ParamT<T>& b() const { return b_; }
  void drop_cache() { has_cache_ = false; }

 private:
  int64_t in_ = 0, out_ = 0;
  bool bias_ = true;
  ParamT<T> w_, b_;
  TensorT<T> x_cache_;
  bool has_cache_ = false;
};

// LayerNorm over the last axis with learnable gamma/beta.
template <class T>
class LayerNormT {
 public:
  LayerNormT() = default;
  LayerNormT(std::string name, int64_t dim, T eps = T(1e-6));

  TensorT<T> forward(const TensorT<T>& x);
  TensorT<T> backward(const TensorT<T>& gy);

  int64_t dim() const { return dim_; }
  ParamT<T>& gamma() { return gamma_; }
  ParamT<T>& beta() { return beta_; }
  void drop_cache() { has_cache_ = false; }

 private:
  int64_t dim_ = 0;
  T eps_ = T(1e-6);
  ParamT<T> gamma_, beta_;
  ops::LayerNormCacheT<T> cache_;
  bool has_cache_ = false;
};

}  // namespace dpt
