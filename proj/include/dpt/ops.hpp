#pragma once

#include <utility>

#include "dpt/tensor.hpp"

namespace dpt {

// Named gradients produced by a backward pass.  Every entry's shape equals
// the shape of the parameter it belongs to; parameters that do not exist in
// a given configuration simply have no entry.
template <class T>
struct GradBundleT {
  std::vector<std::pair<std::string, TensorT<T>>> grads;

  void add(std::string name, TensorT<T> g) { grads.emplace_back(std::move(name), std::move(g)); }
  const TensorT<T>* find(const std::string& name) const {
    for (const auto& [n, g] : grads)
      if (n == name) return &g;
    return nullptr;
  }
};

using GradBundle = GradBundleT<double>;

namespace ops {

// y[i,:] += sum_k a[i,k] * b[k,:], accumulated in increasing k for every
// output element, so results do not depend on tiling and the parallel and
// serial paths agree bit-for-bit.  y must be preinitialized (zeros or bias).
template <class T>
void matmul_accum(const T* a, const T* b, T* y, int64_t m, int64_t k, int64_t n);

// c = a @ b for rank-2 tensors [m x k] @ [k x n].
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

// dW-style product: out[k,n] = sum_r a[r,k] * g[r,n], accumulated in
// increasing r.  Equivalent to transpose(a) @ g without materializing the
// transpose.
template <class T>
void matmul_at_accum(const T* a, const T* g, T* out, int64_t rows, int64_t k, int64_t n);

template <class T>
TensorT<T> matmul_at(const TensorT<T>& a, const TensorT<T>& g);

template <class T>
TensorT<T> transpose2d(const TensorT<T>& a);

// Row-wise softmax over the last axis (any rank >= 1); numerically shifted
// by the row max.
template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x);

// gx from y = softmax(x):  gx = y * (gy - <gy, y>_row).
template <class T>
TensorT<T> softmax_lastdim_backward(const TensorT<T>& y, const TensorT<T>& gy);

template <class T>
TensorT<T> tanh_op(const TensorT<T>& x);
template <class T>
TensorT<T> relu_op(const TensorT<T>& x);
// Exact (erf-based) GELU.
template <class T>
TensorT<T> gelu_op(const TensorT<T>& x);

// Elementwise backward given the forward *input*.
template <class T>
TensorT<T> tanh_backward(const TensorT<T>& x, const TensorT<T>& gy);
template <class T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy);
template <class T>
TensorT<T> gelu_backward(const TensorT<T>& x, const TensorT<T>& gy);

template <class T>
T gelu_scalar(T x);
template <class T>
T gelu_grad_scalar(T x);

// Row-wise layer normalization over the last axis with affine gamma/beta.
template <class T>
struct LayerNormCacheT {
  TensorT<T> xhat;    // normalized input, same shape as x
  TensorT<T> invstd;  // one per row
};

template <class T>
TensorT<T> layernorm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                     T eps, LayerNormCacheT<T>* cache);

template <class T>
TensorT<T> layernorm_backward(const TensorT<T>& gy, const LayerNormCacheT<T>& cache,
                              const TensorT<T>& gamma, TensorT<T>& dgamma, TensorT<T>& dbeta);

// Mean cross-entropy over the batch with optional label smoothing; also
// produces dlogits (already divided by the batch size).
template <class T>
T cross_entropy(const TensorT<T>& logits, const std::vector<int64_t>& labels, T smoothing,
                TensorT<T>* dlogits);

// a += b (shapes must match).
template <class T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b);

}  // namespace ops
}  // namespace dpt
