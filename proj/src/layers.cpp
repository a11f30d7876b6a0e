#include "dpt/layers.hpp"

namespace dpt {

uint64_t name_stream(const std::string& name) {
  // FNV-1a over the name; feeds Rng::fork so each parameter draws from its
  // own counter stream.
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

template <class T>
void init_param(ParamT<T>& p, const Rng& base, InitKind kind, double std) {
  if (kind == InitKind::Zero) {
    p.value.fill(T(0));
    return;
  }
  Rng r = base.fork(name_stream(p.name));
  T* d = p.value.data();
  for (int64_t i = 0; i < p.value.numel(); ++i) d[i] = static_cast<T>(r.trunc_normal(std));
}

template <class T>
LinearT<T>::LinearT(std::string name, int64_t in, int64_t out, bool bias)
    : in_(in), out_(out), bias_(bias) {
  if (in <= 0 || out <= 0)
    throw ConfigError("linear '" + name + "' needs positive extents, got " + std::to_string(in) +
                      " -> " + std::to_string(out));
  w_.init_shape(name + ".w", {in, out}, /*wd=*/true);
  if (bias_) b_.init_shape(name + ".b", {out}, /*wd=*/false);
}

template <class T>
TensorT<T> LinearT<T>::forward(const TensorT<T>& x) {
  int64_t d = x.extent(x.rank() - 1);
  if (d != in_)
    throw ShapeError("linear '" + w_.name + "' expects " + std::to_string(in_) +
                     " input features, got " + shape_to_string(x.shape()));
  int64_t rows = x.numel() / d;
  TensorT<T> y({rows, out_});
  if (bias_) {
    T* yp = y.data();
    const T* bp = b_.value.data();
    for (int64_t r = 0; r < rows; ++r, yp += out_)
      for (int64_t j = 0; j < out_; ++j) yp[j] = bp[j];
  }
  ops::matmul_accum(x.data(), w_.value.data(), y.data(), rows, in_, out_);
  x_cache_ = x.rank() == 2 ? x : x.reshaped({rows, d});
  has_cache_ = true;
  Shape out_shape = x.shape();
  out_shape.back() = out_;
  return y.reshaped(std::move(out_shape));
}

template <class T>
TensorT<T> LinearT<T>::backward(const TensorT<T>& gy) {
  if (!has_cache_) throw StateError("linear '" + w_.name + "' backward without forward cache");
  has_cache_ = false;
  int64_t d = gy.extent(gy.rank() - 1);
  int64_t rows = gy.numel() / d;
  if (d != out_ || rows != x_cache_.extent(0))
    throw ShapeError("linear '" + w_.name + "' backward got " + shape_to_string(gy.shape()) +
                     " for cached input " + shape_to_string(x_cache_.shape()));
  TensorT<T> g2 = gy.rank() == 2 ? gy : gy.reshaped({rows, d});
  ops::matmul_at_accum(x_cache_.data(), g2.data(), w_.grad.data(), rows, in_, out_);
  if (bias_) {
    T* db = b_.grad.data();
    const T* gp = g2.data();
    for (int64_t r = 0; r < rows; ++r, gp += out_)
      for (int64_t j = 0; j < out_; ++j) db[j] += gp[j];
  }
  TensorT<T> wt = ops::transpose2d(w_.value);
  TensorT<T> gx({rows, in_});
  ops::matmul_accum(g2.data(), wt.data(), gx.data(), rows, out_, in_);
  return gx;
}

template <class T>
void LinearT<T>::init_weight(const Rng& base, InitKind kind, double std) {
  init_param(w_, base, kind, std);
}

template <class T>
LayerNormT<T>::LayerNormT(std::string name, int64_t dim, T eps) : dim_(dim), eps_(eps) {
  if (dim <= 0) throw ConfigError("layernorm '" + name + "' needs a positive width");
  gamma_.init_shape(name + ".g", {dim}, /*wd=*/false);
  beta_.init_shape(name + ".b", {dim}, /*wd=*/false);
  gamma_.value.fill(T(1));
}

template <class T>
TensorT<T> LayerNormT<T>::forward(const TensorT<T>& x) {
  if (x.extent(x.rank() - 1) != dim_)
    throw ShapeError("layernorm '" + gamma_.name + "' expects width " + std::to_string(dim_) +
                     ", got " + shape_to_string(x.shape()));
  TensorT<T> y = ops::layernorm(x, gamma_.value, beta_.value, eps_, &cache_);
  has_cache_ = true;
  return y;
}

template <class T>
TensorT<T> LayerNormT<T>::backward(const TensorT<T>& gy) {
  if (!has_cache_) throw StateError("layernorm '" + gamma_.name + "' backward without forward cache");
  has_cache_ = false;
  return ops::layernorm_backward(gy, cache_, gamma_.value, gamma_.grad, beta_.grad);
}

template struct ParamT<float>;
template struct ParamT<double>;
template void init_param<float>(ParamT<float>&, const Rng&, InitKind, double);
template void init_param<double>(ParamT<double>&, const Rng&, InitKind, double);
template class LinearT<float>;
template class LinearT<double>;
template class LayerNormT<float>;
template class LayerNormT<double>;

}  // namespace dpt
