#pragma once

#include "dpt/layers.hpp"

namespace dpt {

// Multi-head self-attention with spatial reduction of keys/values: the token
// grid is cut into non-overlapping R x R windows, each window is flattened,
// linearly projected back to the model width and layer-normalized, shrinking
// the key/value sequence by R^2 (R == 1 disables the reduction).
template <class T>
class SRAttentionT {
 public:
  SRAttentionT() = default;
  SRAttentionT(std::string name, int64_t dim, int64_t heads, int64_t sr_ratio);

  // x: [B, N, C] with N == rows*cols of the current token grid.
  TensorT<T> forward(const TensorT<T>& x, int64_t grid_rows, int64_t grid_cols);
  TensorT<T> backward(const TensorT<T>& gy);

  int64_t dim() const { return dim_; }
  int64_t heads() const { return heads_; }
  int64_t sr_ratio() const { return sr_; }

  std::vector<ParamT<T>*> params();
  std::vector<LinearT<T>*> linears();
  LayerNormT<T>* sr_norm() { return sr_ > 1 ? &srn_ : nullptr; }

 private:
  int64_t dim_ = 0, heads_ = 0, head_dim_ = 0, sr_ = 1;
  LinearT<T> q_, k_, v_, proj_, srl_;
  LayerNormT<T> srn_;

  // forward cache
  int64_t bsz_ = 0, n_ = 0, nkv_ = 0, rows_ = 0, cols_ = 0;
  TensorT<T> qm_, km_, vm_;    // [B*N, C] / [B*Nkv, C]
  TensorT<T> probs_;           // [B, H, N, Nkv]
  bool has_cache_ = false;
};

// Two-layer MLP with exact GELU between.
template <class T>
class MlpT {
 public:
  MlpT() = default;
  MlpT(std::string name, int64_t dim, int64_t hidden);

  TensorT<T> forward(const TensorT<T>& x);
  TensorT<T> backward(const TensorT<T>& gy);

  std::vector<ParamT<T>*> params();
  LinearT<T>& fc1() { return fc1_; }
  LinearT<T>& fc2() { return fc2_; }

 private:
  LinearT<T> fc1_, fc2_;
  TensorT<T> pre_;  // fc1 output before GELU
  bool has_cache_ = false;
};

// Pre-norm transformer block: x + attn(ln1(x)), then y + mlp(ln2(y)).
template <class T>
class BlockT {
 public:
  BlockT() = default;
  BlockT(std::string name, int64_t dim, int64_t heads, int64_t sr_ratio, int64_t mlp_ratio);

  TensorT<T> forward(const TensorT<T>& x, int64_t grid_rows, int64_t grid_cols);
  TensorT<T> backward(const TensorT<T>& gy);

  std::vector<ParamT<T>*> params();
  SRAttentionT<T>& attn() { return attn_; }
  MlpT<T>& mlp() { return mlp_; }

 private:
  LayerNormT<T> ln1_, ln2_;
  SRAttentionT<T> attn_;
  MlpT<T> mlp_;
};

}  // namespace dpt
