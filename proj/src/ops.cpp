#include "dpt/ops.hpp"

#include <cmath>

namespace dpt {
namespace ops {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <class T>
void require_rank2(const TensorT<T>& t, const char* who) {
  if (t.rank() != 2)
    throw ShapeError(std::string(who) + " expects rank-2 operands, got " +
                     shape_to_string(t.shape()));
}

// Rows/features split: all leading axes are rows, the last axis is features.
template <class T>
std::pair<int64_t, int64_t> rows_cols(const TensorT<T>& t) {
  int64_t d = t.extent(t.rank() - 1);
  return {t.numel() / d, d};
}

}  // namespace

template <class T>
void matmul_accum(const T* a, const T* b, T* y, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* yrow = y + i * n;
    int64_t p = 0;
    // Four k-steps per pass; the per-element accumulation order is still
    // strictly increasing k, identical to the scalar tail below.
    for (; p + 4 <= k; p += 4) {
      const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const T* b0 = b + p * n;
      const T* b1 = b0 + n;
      const T* b2 = b1 + n;
      const T* b3 = b2 + n;
      for (int64_t j = 0; j < n; ++j)
        yrow[j] = ((((yrow[j] + a0 * b0[j]) + a1 * b1[j]) + a2 * b2[j]) + a3 * b3[j]);
    }
    for (; p < k; ++p) {
      const T ap = arow[p];
      const T* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) yrow[j] += ap * bp[j];
    }
  }
}

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  if (a.extent(1) != b.extent(0))
    throw ShapeError("matmul inner extents disagree: " + shape_to_string(a.shape()) + " @ " +
                     shape_to_string(b.shape()));
  TensorT<T> y({a.extent(0), b.extent(1)});
  matmul_accum(a.data(), b.data(), y.data(), a.extent(0), a.extent(1), b.extent(1));
  return y;
}

template <class T>
void matmul_at_accum(const T* a, const T* g, T* out, int64_t rows, int64_t k, int64_t n) {
  // out[k,n] as a sum of per-row outer products, accumulated in row order.
  for (int64_t r = 0; r < rows; ++r) {
    const T* arow = a + r * k;
    const T* grow = g + r * n;
    for (int64_t p = 0; p < k; ++p) {
      const T ap = arow[p];
      T* orow = out + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += ap * grow[j];
    }
  }
}

template <class T>
TensorT<T> matmul_at(const TensorT<T>& a, const TensorT<T>& g) {
  require_rank2(a, "matmul_at");
  require_rank2(g, "matmul_at");
  if (a.extent(0) != g.extent(0))
    throw ShapeError("matmul_at row extents disagree: " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(g.shape()));
  TensorT<T> out({a.extent(1), g.extent(1)});
  matmul_at_accum(a.data(), g.data(), out.data(), a.extent(0), a.extent(1), g.extent(1));
  return out;
}

template <class T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  require_rank2(a, "transpose2d");
  int64_t m = a.extent(0), n = a.extent(1);
  TensorT<T> out({n, m});
  const T* src = a.data();
  T* dst = out.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  return out;
}

template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x) {
  auto [rows, d] = rows_cols(x);
  TensorT<T> y(x.shape());
  const T* in = x.data();
  T* out = y.data();
  for (int64_t r = 0; r < rows; ++r, in += d, out += d) {
    T mx = in[0];
    for (int64_t j = 1; j < d; ++j)
      if (in[j] > mx) mx = in[j];
    T sum = 0;
    for (int64_t j = 0; j < d; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    T inv = T(1) / sum;
    for (int64_t j = 0; j < d; ++j) out[j] *= inv;
  }
  return y;
}

template <class T>
TensorT<T> softmax_lastdim_backward(const TensorT<T>& y, const TensorT<T>& gy) {
  require(y.same_shape(gy), "softmax backward shapes disagree: " + shape_to_string(y.shape()) +
                                " vs " + shape_to_string(gy.shape()));
  auto [rows, d] = rows_cols(y);
  TensorT<T> gx(y.shape());
  const T* yp = y.data();
  const T* gp = gy.data();
  T* xp = gx.data();
  for (int64_t r = 0; r < rows; ++r, yp += d, gp += d, xp += d) {
    T dot = 0;
    for (int64_t j = 0; j < d; ++j) dot += gp[j] * yp[j];
    for (int64_t j = 0; j < d; ++j) xp[j] = yp[j] * (gp[j] - dot);
  }
  return gx;
}

template <class T>
T gelu_scalar(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(M_SQRT1_2)));
}

template <class T>
T gelu_grad_scalar(T x) {
  T cdf = T(0.5) * (T(1) + std::erf(x * T(M_SQRT1_2)));
  T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
  return cdf + x * pdf;
}

template <class T>
TensorT<T> tanh_op(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y.data()[i] = std::tanh(x.data()[i]);
  return y;
}

template <class T>
TensorT<T> relu_op(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return y;
}

template <class T>
TensorT<T> gelu_op(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) y.data()[i] = gelu_scalar(x.data()[i]);
  return y;
}

template <class T>
TensorT<T> tanh_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  require(x.same_shape(gy), "tanh backward shapes disagree");
  TensorT<T> gx(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    T t = std::tanh(x.data()[i]);
    gx.data()[i] = gy.data()[i] * (T(1) - t * t);
  }
  return gx;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  require(x.same_shape(gy), "relu backward shapes disagree");
  TensorT<T> gx(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    gx.data()[i] = x.data()[i] > T(0) ? gy.data()[i] : T(0);
  return gx;
}

template <class T>
TensorT<T> gelu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
  require(x.same_shape(gy), "gelu backward shapes disagree");
  TensorT<T> gx(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) gx.data()[i] = gy.data()[i] * gelu_grad_scalar(x.data()[i]);
  return gx;
}

template <class T>
TensorT<T> layernorm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                     T eps, LayerNormCacheT<T>* cache) {
  auto [rows, d] = rows_cols(x);
  require(gamma.numel() == d && beta.numel() == d,
          "layernorm affine extents " + shape_to_string(gamma.shape()) + "/" +
              shape_to_string(beta.shape()) + " do not match feature width " + std::to_string(d));
  TensorT<T> y(x.shape());
  TensorT<T> xhat(x.shape());
  TensorT<T> invstd({rows});
  const T* in = x.data();
  T* out = y.data();
  T* xh = xhat.data();
  const T* g = gamma.data();
  const T* b = beta.data();
  for (int64_t r = 0; r < rows; ++r, in += d, out += d, xh += d) {
    T mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<T>(d);
    T var = 0;
    for (int64_t j = 0; j < d; ++j) {
      T c = in[j] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    T inv = T(1) / std::sqrt(var + eps);
    invstd.data()[r] = inv;
    for (int64_t j = 0; j < d; ++j) {
      xh[j] = (in[j] - mean) * inv;
      out[j] = xh[j] * g[j] + b[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->invstd = std::move(invstd);
  }
  return y;
}

template <class T>
TensorT<T> layernorm_backward(const TensorT<T>& gy, const LayerNormCacheT<T>& cache,
                              const TensorT<T>& gamma, TensorT<T>& dgamma, TensorT<T>& dbeta) {
  require(gy.same_shape(cache.xhat), "layernorm backward called with mismatched cache");
  auto [rows, d] = rows_cols(gy);
  TensorT<T> gx(gy.shape());
  const T* gp = gy.data();
  const T* xh = cache.xhat.data();
  const T* g = gamma.data();
  T* xp = gx.data();
  for (int64_t r = 0; r < rows; ++r, gp += d, xh += d, xp += d) {
    T inv = cache.invstd.data()[r];
    T sum_gh = 0, sum_ghx = 0;
    for (int64_t j = 0; j < d; ++j) {
      T gh = gp[j] * g[j];
      sum_gh += gh;
      sum_ghx += gh * xh[j];
    }
    T m1 = sum_gh / static_cast<T>(d);
    T m2 = sum_ghx / static_cast<T>(d);
    for (int64_t j = 0; j < d; ++j) {
      T gh = gp[j] * g[j];
      xp[j] = inv * (gh - m1 - xh[j] * m2);
    }
    for (int64_t j = 0; j < d; ++j) {
      dgamma.data()[j] += gp[j] * xh[j];
      dbeta.data()[j] += gp[j];
    }
  }
  return gx;
}

template <class T>
T cross_entropy(const TensorT<T>& logits, const std::vector<int64_t>& labels, T smoothing,
                TensorT<T>* dlogits) {
  require_rank2(logits, "cross_entropy");
  int64_t bsz = logits.extent(0), k = logits.extent(1);
  if (static_cast<int64_t>(labels.size()) != bsz)
    throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " labels for batch " +
                     std::to_string(bsz));
  for (int64_t i = 0; i < bsz; ++i)
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= k)
      throw ArgumentError("label " + std::to_string(labels[static_cast<size_t>(i)]) +
                          " out of range for " + std::to_string(k) + " classes");
  TensorT<T> probs = softmax_lastdim(logits);
  if (dlogits) *dlogits = TensorT<T>({bsz, k});
  T inv_b = T(1) / static_cast<T>(bsz);
  T off = smoothing / static_cast<T>(k);
  T on = T(1) - smoothing + off;
  T loss = 0;
  for (int64_t i = 0; i < bsz; ++i) {
    const T* p = probs.data() + i * k;
    int64_t y = labels[static_cast<size_t>(i)];
    // loss_i = -sum_j t_j log p_j with t = smoothed one-hot.
    if (smoothing == T(0)) {
      loss -= std::log(p[y]);
    } else {
      T li = 0;
      for (int64_t j = 0; j < k; ++j) li -= (j == y ? on : off) * std::log(p[j]);
      loss += li;
    }
    if (dlogits) {
      T* dl = dlogits->data() + i * k;
      for (int64_t j = 0; j < k; ++j) dl[j] = (p[j] - (j == y ? on : off)) * inv_b;
    }
  }
  return loss * inv_b;
}

template <class T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
  require(a.same_shape(b), "add_inplace shapes disagree: " + shape_to_string(a.shape()) + " vs " +
                               shape_to_string(b.shape()));
  T* ap = a.data();
  const T* bp = b.data();
  for (int64_t i = 0; i < a.numel(); ++i) ap[i] += bp[i];
}

#define DPT_INSTANTIATE_OPS(T)                                                                   \
  template void matmul_accum<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);              \
  template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                           \
  template void matmul_at_accum<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);           \
  template TensorT<T> matmul_at<T>(const TensorT<T>&, const TensorT<T>&);                        \
  template TensorT<T> transpose2d<T>(const TensorT<T>&);                                         \
  template TensorT<T> softmax_lastdim<T>(const TensorT<T>&);                                     \
  template TensorT<T> softmax_lastdim_backward<T>(const TensorT<T>&, const TensorT<T>&);         \
  template T gelu_scalar<T>(T);                                                                  \
  template T gelu_grad_scalar<T>(T);                                                             \
  template TensorT<T> tanh_op<T>(const TensorT<T>&);                                             \
  template TensorT<T> relu_op<T>(const TensorT<T>&);                                             \
  template TensorT<T> gelu_op<T>(const TensorT<T>&);                                             \
  template TensorT<T> tanh_backward<T>(const TensorT<T>&, const TensorT<T>&);                    \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                    \
  template TensorT<T> gelu_backward<T>(const TensorT<T>&, const TensorT<T>&);                    \
  template TensorT<T> layernorm<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, T,  \
                                   LayerNormCacheT<T>*);                                         \
  template TensorT<T> layernorm_backward<T>(const TensorT<T>&, const LayerNormCacheT<T>&,        \
                                            const TensorT<T>&, TensorT<T>&, TensorT<T>&);        \
  template T cross_entropy<T>(const TensorT<T>&, const std::vector<int64_t>&, T, TensorT<T>*);   \
  template void add_inplace<T>(TensorT<T>&, const TensorT<T>&);

DPT_INSTANTIATE_OPS(float)
DPT_INSTANTIATE_OPS(double)

#undef DPT_INSTANTIATE_OPS

}  // namespace ops
}  // namespace dpt
