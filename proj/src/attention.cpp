#include "dpt/attention.hpp"

#include <cmath>
#include <cstring>

namespace dpt {

namespace {

// [B, rows, cols, C] tokens -> [B*Nkv, R*R*C] windows, row-major within each
// window, channels innermost (same layout rule as patch gathering).
template <class T>
TensorT<T> gather_token_windows(const TensorT<T>& x, int64_t bsz, int64_t rows, int64_t cols,
                                int64_t c, int64_t r) {
  int64_t wr = rows / r, wc = cols / r;
  TensorT<T> out({bsz * wr * wc, r * r * c});
  T* dst = out.data();
  for (int64_t b = 0; b < bsz; ++b) {
    const T* base = x.data() + b * rows * cols * c;
    for (int64_t i = 0; i < wr; ++i)
      for (int64_t j = 0; j < wc; ++j)
        for (int64_t dy = 0; dy < r; ++dy) {
          const T* src = base + ((i * r + dy) * cols + j * r) * c;
          for (int64_t t = 0; t < r * c; ++t) *dst++ = src[t];
        }
  }
  return out;
}

template <class T>
void scatter_token_windows_add(TensorT<T>& dx, const TensorT<T>& gwin, int64_t bsz, int64_t rows,
                               int64_t cols, int64_t c, int64_t r) {
  int64_t wr = rows / r, wc = cols / r;
  const T* src = gwin.data();
  for (int64_t b = 0; b < bsz; ++b) {
    T* base = dx.data() + b * rows * cols * c;
    for (int64_t i = 0; i < wr; ++i)
      for (int64_t j = 0; j < wc; ++j)
        for (int64_t dy = 0; dy < r; ++dy) {
          T* dst = base + ((i * r + dy) * cols + j * r) * c;
          for (int64_t t = 0; t < r * c; ++t) dst[t] += *src++;
        }
  }
}

}  // namespace

template <class T>
SRAttentionT<T>::SRAttentionT(std::string name, int64_t dim, int64_t heads, int64_t sr_ratio)
    : dim_(dim), heads_(heads), sr_(sr_ratio) {
  if (heads <= 0 || dim <= 0) throw ConfigError("attention '" + name + "' needs positive dim/heads");
  if (dim % heads != 0)
    throw ConfigError("attention '" + name + "': " + std::to_string(heads) +
                      " heads do not divide width " + std::to_string(dim));
  if (sr_ratio < 1) throw ConfigError("attention '" + name + "': reduction ratio must be >= 1");
  head_dim_ = dim / heads;
  q_ = LinearT<T>(name + ".q", dim, dim);
  k_ = LinearT<T>(name + ".k", dim, dim);
  v_ = LinearT<T>(name + ".v", dim, dim);
  proj_ = LinearT<T>(name + ".proj", dim, dim);
  if (sr_ > 1) {
    srl_ = LinearT<T>(name + ".sr", sr_ * sr_ * dim, dim);
    srn_ = LayerNormT<T>(name + ".srn", dim);
  }
}

template <class T>
TensorT<T> SRAttentionT<T>::forward(const TensorT<T>& x, int64_t grid_rows, int64_t grid_cols) {
  if (x.rank() != 3 || x.extent(2) != dim_)
    throw ShapeError("attention expects [B, N, C] with C=" + std::to_string(dim_) + ", got " +
                     shape_to_string(x.shape()));
  bsz_ = x.extent(0);
  n_ = x.extent(1);
  if (grid_rows * grid_cols != n_)
    throw ShapeError("token grid " + std::to_string(grid_rows) + "x" + std::to_string(grid_cols) +
                     " does not hold " + std::to_string(n_) + " tokens");
  if (grid_rows % sr_ != 0 || grid_cols % sr_ != 0)
    throw ConfigError("reduction ratio " + std::to_string(sr_) + " does not divide token grid " +
                      std::to_string(grid_rows) + "x" + std::to_string(grid_cols));
  rows_ = grid_rows;
  cols_ = grid_cols;

  qm_ = q_.forward(x.reshaped({bsz_ * n_, dim_}));
  TensorT<T> kv_src;
  if (sr_ > 1) {
    TensorT<T> win = gather_token_windows(x, bsz_, rows_, cols_, dim_, sr_);
    kv_src = srn_.forward(srl_.forward(win));
    nkv_ = (rows_ / sr_) * (cols_ / sr_);
  } else {
    kv_src = x.reshaped({bsz_ * n_, dim_});
    nkv_ = n_;
  }
  km_ = k_.forward(kv_src);
  vm_ = v_.forward(kv_src);

  probs_ = TensorT<T>({bsz_, heads_, n_, nkv_});
  TensorT<T> ctx({bsz_ * n_, dim_});
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(head_dim_));
  for (int64_t b = 0; b < bsz_; ++b) {
    for (int64_t h = 0; h < heads_; ++h) {
      TensorT<T> qh({n_, head_dim_});
      {
        const T* src = qm_.data() + (b * n_) * dim_ + h * head_dim_;
        T* dst = qh.data();
        for (int64_t i = 0; i < n_; ++i, src += dim_, dst += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j] * inv_sqrt_d;
      }
      TensorT<T> kh({nkv_, head_dim_});
      {
        const T* src = km_.data() + (b * nkv_) * dim_ + h * head_dim_;
        T* dst = kh.data();
        for (int64_t i = 0; i < nkv_; ++i, src += dim_, dst += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j];
      }
      TensorT<T> kt = ops::transpose2d(kh);
      TensorT<T> scores({n_, nkv_});
      ops::matmul_accum(qh.data(), kt.data(), scores.data(), n_, head_dim_, nkv_);
      TensorT<T> p = ops::softmax_lastdim(scores);
      std::memcpy(probs_.data() + ((b * heads_ + h) * n_) * nkv_, p.data(),
                  sizeof(T) * static_cast<size_t>(n_ * nkv_));
      TensorT<T> vh({nkv_, head_dim_});
      {
        const T* src = vm_.data() + (b * nkv_) * dim_ + h * head_dim_;
        T* dst = vh.data();
        for (int64_t i = 0; i < nkv_; ++i, src += dim_, dst += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j];
      }
      TensorT<T> oh({n_, head_dim_});
      ops::matmul_accum(p.data(), vh.data(), oh.data(), n_, nkv_, head_dim_);
      {
        const T* src = oh.data();
        T* dst = ctx.data() + (b * n_) * dim_ + h * head_dim_;
        for (int64_t i = 0; i < n_; ++i, src += head_dim_, dst += dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j];
      }
    }
  }
  TensorT<T> y = proj_.forward(ctx);
  has_cache_ = true;
  return y.reshaped({bsz_, n_, dim_});
}

template <class T>
TensorT<T> SRAttentionT<T>::backward(const TensorT<T>& gy) {
  if (!has_cache_) throw StateError("attention backward without forward cache");
  has_cache_ = false;
  if (gy.numel() != bsz_ * n_ * dim_)
    throw ShapeError("attention backward got " + shape_to_string(gy.shape()));
  TensorT<T> gctx = proj_.backward(gy.reshaped({bsz_ * n_, dim_}));

  TensorT<T> dq({bsz_ * n_, dim_});
  TensorT<T> dk({bsz_ * nkv_, dim_});
  TensorT<T> dv({bsz_ * nkv_, dim_});
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(head_dim_));
  for (int64_t b = 0; b < bsz_; ++b) {
    for (int64_t h = 0; h < heads_; ++h) {
      // Rebuild the per-head operand copies from the cached projections; qh
      // carries the 1/sqrt(d) scale exactly as the forward pass used it, so
      // dK = dS^T qh already includes the scale.
      TensorT<T> qh({n_, head_dim_}), kh({nkv_, head_dim_}), vh({nkv_, head_dim_});
      {
        const T* src = qm_.data() + (b * n_) * dim_ + h * head_dim_;
        T* dst = qh.data();
        for (int64_t i = 0; i < n_; ++i, src += dim_, dst += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j] * inv_sqrt_d;
      }
      {
        const T* srck = km_.data() + (b * nkv_) * dim_ + h * head_dim_;
        const T* srcv = vm_.data() + (b * nkv_) * dim_ + h * head_dim_;
        T* dstk = kh.data();
        T* dstv = vh.data();
        for (int64_t i = 0; i < nkv_; ++i, srck += dim_, srcv += dim_, dstk += head_dim_,
                     dstv += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) {
            dstk[j] = srck[j];
            dstv[j] = srcv[j];
          }
      }
      TensorT<T> doh({n_, head_dim_});
      {
        const T* src = gctx.data() + (b * n_) * dim_ + h * head_dim_;
        T* dst = doh.data();
        for (int64_t i = 0; i < n_; ++i, src += dim_, dst += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] = src[j];
      }
      TensorT<T> p({n_, nkv_});
      std::memcpy(p.data(), probs_.data() + ((b * heads_ + h) * n_) * nkv_,
                  sizeof(T) * static_cast<size_t>(n_ * nkv_));

      // dV_h = P^T dO_h
      TensorT<T> dvh = ops::matmul_at(p, doh);
      // dP = dO_h V_h^T
      TensorT<T> vt = ops::transpose2d(vh);
      TensorT<T> dp({n_, nkv_});
      ops::matmul_accum(doh.data(), vt.data(), dp.data(), n_, head_dim_, nkv_);
      TensorT<T> ds = ops::softmax_lastdim_backward(p, dp);
      // scores = (q * inv_sqrt_d) k^T : fold the scale into dq path only,
      // because qh was cached pre-scaled.
      TensorT<T> dqh({n_, head_dim_});
      ops::matmul_accum(ds.data(), kh.data(), dqh.data(), n_, nkv_, head_dim_);
      TensorT<T> dkh = ops::matmul_at(ds, qh);

      {
        T* dst = dq.data() + (b * n_) * dim_ + h * head_dim_;
        const T* src = dqh.data();
        for (int64_t i = 0; i < n_; ++i, dst += dim_, src += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) dst[j] += src[j] * inv_sqrt_d;
      }
      {
        T* dstk = dk.data() + (b * nkv_) * dim_ + h * head_dim_;
        T* dstv = dv.data() + (b * nkv_) * dim_ + h * head_dim_;
        const T* srck = dkh.data();
        const T* srcv = dvh.data();
        for (int64_t i = 0; i < nkv_; ++i, dstk += dim_, dstv += dim_, srck += head_dim_,
                     srcv += head_dim_)
          for (int64_t j = 0; j < head_dim_; ++j) {
            dstk[j] += srck[j];
            dstv[j] += srcv[j];
          }
      }
    }
  }

  TensorT<T> gx({bsz_ * n_, dim_});
  ops::add_inplace(gx, q_.backward(dq));
  TensorT<T> gkv = k_.backward(dk);
  ops::add_inplace(gkv, v_.backward(dv));
  if (sr_ > 1) {
    TensorT<T> gsr = srl_.backward(srn_.backward(gkv));
    TensorT<T> dx4({bsz_, rows_, cols_, dim_});
    scatter_token_windows_add(dx4, gsr, bsz_, rows_, cols_, dim_, sr_);
    ops::add_inplace(gx, dx4.reshaped({bsz_ * n_, dim_}));
  } else {
    ops::add_inplace(gx, gkv);
  }
  return gx.reshaped({bsz_, n_, dim_});
}

template <class T>
std::vector<ParamT<T>*> SRAttentionT<T>::params() {
  std::vector<ParamT<T>*> out = {&q_.w(), &q_.b(), &k_.w(), &k_.b(), &v_.w(), &v_.b()};
  if (sr_ > 1) {
    out.push_back(&srl_.w());
    out.push_back(&srl_.b());
    out.push_back(&srn_.gamma());
    out.push_back(&srn_.beta());
  }
  out.push_back(&proj_.w());
  out.push_back(&proj_.b());
  return out;
}

template <class T>
std::vector<LinearT<T>*> SRAttentionT<T>::linears() {
  std::vector<LinearT<T>*> out = {&q_, &k_, &v_, &proj_};
  if (sr_ > 1) out.push_back(&srl_);
  return out;
}

template <class T>
MlpT<T>::MlpT(std::string name, int64_t dim, int64_t hidden)
    : fc1_(name + ".fc1", dim, hidden), fc2_(name + ".fc2", hidden, dim) {}

template <class T>
TensorT<T> MlpT<T>::forward(const TensorT<T>& x) {
  pre_ = fc1_.forward(x);
  has_cache_ = true;
  return fc2_.forward(ops::gelu_op(pre_));
}

template <class T>
TensorT<T> MlpT<T>::backward(const TensorT<T>& gy) {
  if (!has_cache_) throw StateError("mlp backward without forward cache");
  has_cache_ = false;
  TensorT<T> gh = fc2_.backward(gy);
  return fc1_.backward(ops::gelu_backward(pre_.reshaped(gh.shape()), gh));
}

template <class T>
std::vector<ParamT<T>*> MlpT<T>::params() {
  return {&fc1_.w(), &fc1_.b(), &fc2_.w(), &fc2_.b()};
}

template <class T>
BlockT<T>::BlockT(std::string name, int64_t dim, int64_t heads, int64_t sr_ratio,
                  int64_t mlp_ratio)
    : ln1_(name + ".ln1", dim),
      ln2_(name + ".ln2", dim),
      attn_(name + ".attn", dim, heads, sr_ratio),
      mlp_(name + ".mlp", dim, dim * mlp_ratio) {
  if (mlp_ratio < 1) throw ConfigError("block '" + name + "' needs mlp_ratio >= 1");
}

template <class T>
TensorT<T> BlockT<T>::forward(const TensorT<T>& x, int64_t grid_rows, int64_t grid_cols) {
  TensorT<T> y = x;
  ops::add_inplace(y, attn_.forward(ln1_.forward(x), grid_rows, grid_cols));
  TensorT<T> z = y;
  ops::add_inplace(z, mlp_.forward(ln2_.forward(y)).reshaped(y.shape()));
  return z;
}

template <class T>
TensorT<T> BlockT<T>::backward(const TensorT<T>& gz) {
  TensorT<T> gy = gz;
  ops::add_inplace(gy, ln2_.backward(mlp_.backward(gz).reshaped(gz.shape())));
  TensorT<T> gx = gy;
  ops::add_inplace(gx, ln1_.backward(attn_.backward(gy)));
  return gx;
}

template <class T>
std::vector<ParamT<T>*> BlockT<T>::params() {
  std::vector<ParamT<T>*> out = {&ln1_.gamma(), &ln1_.beta()};
  for (auto* p : attn_.params()) out.push_back(p);
  out.push_back(&ln2_.gamma());
  out.push_back(&ln2_.beta());
  for (auto* p : mlp_.params()) out.push_back(p);
  return out;
}

template class SRAttentionT<float>;
template class SRAttentionT<double>;
template class MlpT<float>;
template class MlpT<double>;
template class BlockT<float>;
template class BlockT<double>;

}  // namespace dpt
