#pragma once

#include "dpt/layers.hpp"

namespace dpt {

// Regular patch tiling of an H x W feature map.  Patch (r, c) covers the
// square [c*s - 0.5, c*s + s - 0.5] x [r*s - 0.5, r*s + s - 0.5] in pixel
// coordinates where pixel (i, j) sits at integer (x=j, y=i); its center is
// (c*s + (s-1)/2, r*s + (s-1)/2).  Patches are ordered row-major.
struct PatchGridSpec {
  int64_t input_h = 0, input_w = 0;
  int64_t patch = 0;
  int64_t n_rows = 0, n_cols = 0, n_patches = 0;

  static PatchGridSpec make(int64_t h, int64_t w, int64_t s);
  double center_x(int64_t col) const { return static_cast<double>(col * patch) + (patch - 1) * 0.5; }
  double center_y(int64_t row) const { return static_cast<double>(row * patch) + (patch - 1) * 0.5; }
};

// Predicted rectangle for one patch.  Always double: the squashing functions
// run in the layer's scalar type (so the identity-start values are exact in
// that type), but the affine layout math and anything reported downstream
// stay at full precision regardless of training dtype.
struct PatchGeometry {
  double x_ct, y_ct;      // fixed grid center
  double dx, dy;          // predicted offset
  double sw, sh;          // predicted side lengths
  double x1, y1, x2, y2;  // corners: x1 = x_ct + dx - sw/2, x2 = x_ct + dx + sw/2
};

struct DePatchConfig {
  int64_t k = 3;         // sampling points per axis
  double r_off = 2.0;    // offset range: delta = r_off * s * tanh(.)
  double r_sc = 4.0;     // scale range:  side  = r_sc * s * relu(tanh(.))
  bool predict_offsets = true;
  bool predict_scales = true;
};

// Value b such that tanh(b) == 1/r_sc exactly in T's arithmetic when such a
// representable b exists near atanh(1/r_sc); this makes the initial predicted
// side equal the patch size bit-for-bit.
template <class T>
T scale_bias_init(T r_sc);

// The k*k sampling lattice of a rectangle: point (a, b) with a indexing rows
// (y) and b columns (x) sits at
//   x = x1 + (b + 0.5) * (x2 - x1) / k,   y = y1 + (a + 0.5) * (y2 - y1) / k.
// xs/ys receive k values each (per-axis coordinates).
template <class T>
void sampling_grid(const PatchGeometry& g, int64_t k, T* xs, T* ys);

// Bilinear interpolation of map a ([H, W, C]) at real coordinates (px, py)
// with zero padding outside; writes C values to out.  Only the (up to) four
// integer neighbors carry nonzero kernel weight.
template <class T>
void bilinear_sample(const TensorT<T>& a, T px, T py, T* out);

template <class T>
TensorT<T> bilinear_sample(const TensorT<T>& a, T px, T py);

// Reference evaluation of the full interpolation-kernel sum over every
// integer position of the map.  Kept deliberately independent of the fast
// path (it is the contrast case for benchmarks and the oracle for tests).
template <class T>
TensorT<T> bilinear_sample_bruteforce(const TensorT<T>& a, T px, T py);

// Adjoint of bilinear_sample: given gout (C values), accumulates into da and
// returns d(px), d(py).  At kernel kinks (zero or unit distance along an
// axis) the one-sided derivative is defined as 0.
template <class T>
void bilinear_sample_adjoint(const TensorT<T>& a, T px, T py, const T* gout, TensorT<T>& da,
                             T& dpx, T& dpy);

// Gathers each patch's s*s window flattened row-major (y, x, channels
// innermost): input [B, H, W, C] -> [B*N, s*s*C].
template <class T>
TensorT<T> gather_patch_windows(const TensorT<T>& a, const PatchGridSpec& grid);

template <class T>
void scatter_patch_windows_add(TensorT<T>& da, const TensorT<T>& gwin, const PatchGridSpec& grid);

// Fixed-tiling patch embedding: flatten each window, project with W, b.
template <class T>
class VanillaPatchEmbedT {
 public:
  VanillaPatchEmbedT() = default;
  VanillaPatchEmbedT(std::string name, PatchGridSpec grid, int64_t in_ch, int64_t out_ch);

  TensorT<T> forward(const TensorT<T>& a);   // [B,H,W,C] or [H,W,C] -> [B,N,out]
  TensorT<T> backward(const TensorT<T>& gy);

  LinearT<T>& proj() { return proj_; }
  const PatchGridSpec& grid() const { return grid_; }
  void init_params(const Rng& base) { proj_.init_weight(base, InitKind::TruncNormal); }

 private:
  PatchGridSpec grid_;
  int64_t in_ch_ = 0, out_ch_ = 0;
  LinearT<T> proj_;
  bool batched_input_ = true;
};

// Deformable patch embedding.  Per patch, a feature vector u = f_p(window)
// drives two small heads:
//   offset = r_off * s * tanh(W_off u)            (no bias)
//   side   = r_sc  * s * relu(tanh(W_sc u + b))   (b init so side == s)
// The k*k lattice of the shifted/scaled rectangle is sampled bilinearly and
// the concatenated samples are projected to the embedding width.
template <class T>
class DePatchEmbedT {
 public:
  DePatchEmbedT() = default;
  DePatchEmbedT(std::string name, PatchGridSpec grid, int64_t in_ch, int64_t out_ch,
                DePatchConfig cfg);

  TensorT<T> forward(const TensorT<T>& a);   // [B,H,W,C] or [H,W,C] -> [B,N,out]
  TensorT<T> backward(const TensorT<T>& gy);  // -> d(input), params accumulate

  // Geometry for one image without touching the layer cache.
  std::vector<PatchGeometry> predict_geometry(const TensorT<T>& a_single);

  // Geometry of the latest forward, one entry per (batch, patch).
  const std::vector<PatchGeometry>& last_geometry() const { return geom_; }
  // Sampling coordinates of the latest forward: [B*N, k*k, 2] as (x, y).
  const TensorT<T>& last_coords() const { return coords_; }

  const PatchGridSpec& grid() const { return grid_; }
  const DePatchConfig& config() const { return cfg_; }
  bool has_predictor() const { return cfg_.predict_offsets || cfg_.predict_scales; }

  LinearT<T>& fp() { return fp_; }
  LinearT<T>& offset_head() { return off_; }
  LinearT<T>& scale_head() { return sc_; }
  LinearT<T>& proj() { return proj_; }

  // All existing params in declaration order.
  std::vector<ParamT<T>*> params();

  // f_p and the output projection always draw truncated-normal weights; the
  // offset/scale head weights follow `predictor_mode` (Zero for the
  // identity-start init).  The scale-head bias keeps its exact-side value.
  void init_params(const Rng& base, InitKind predictor_mode);

 private:
  void compute_geometry(const TensorT<T>* off_pre, const TensorT<T>* sc_pre, int64_t n_total,
                        std::vector<PatchGeometry>& geom) const;

  PatchGridSpec grid_;
  int64_t in_ch_ = 0, out_ch_ = 0;
  DePatchConfig cfg_;
  LinearT<T> fp_, off_, sc_, proj_;

  TensorT<T> a_cache_;      // [B,H,W,C]
  TensorT<T> off_pre_, sc_pre_;
  std::vector<PatchGeometry> geom_;
  TensorT<T> coords_;       // [B*N, k*k, 2] (x, y)
  bool batched_input_ = true;
  bool has_cache_ = false;
};

using DePatchEmbed = DePatchEmbedT<double>;

}  // namespace dpt
