#include "dpt/depatch.hpp"

#include <cmath>
#include <cstring>
#include <limits>

namespace dpt {

PatchGridSpec PatchGridSpec::make(int64_t h, int64_t w, int64_t s) {
  if (h <= 0 || w <= 0 || s <= 0)
    throw ConfigError("patch grid needs positive input_h/input_w/patch, got " + std::to_string(h) +
                      "x" + std::to_string(w) + " patch " + std::to_string(s));
  if (h % s != 0 || w % s != 0)
    throw ConfigError("patch size " + std::to_string(s) + " does not divide input " +
                      std::to_string(h) + "x" + std::to_string(w));
  PatchGridSpec g;
  g.input_h = h;
  g.input_w = w;
  g.patch = s;
  g.n_rows = h / s;
  g.n_cols = w / s;
  g.n_patches = g.n_rows * g.n_cols;
  return g;
}

template <class T>
T scale_bias_init(T r_sc) {
  if (!(r_sc > T(1)))
    throw ConfigError("scale range must exceed 1, got " + std::to_string(double(r_sc)));
  T target = T(1) / r_sc;
  T b = static_cast<T>(std::atanh(static_cast<double>(target)));
  if (std::tanh(b) == target) return b;
  // tanh(atanh(x)) may land one ulp off; walk to a preimage that maps back
  // exactly so the initial predicted side equals the patch size bit-for-bit.
  for (int dir = 0; dir < 2; ++dir) {
    T lim = dir == 0 ? std::numeric_limits<T>::infinity() : -std::numeric_limits<T>::infinity();
    T x = b;
    for (int i = 0; i < 64; ++i) {
      x = std::nextafter(x, lim);
      if (std::tanh(x) == target) return x;
    }
  }
  return b;
}

template <class T>
void sampling_grid(const PatchGeometry& g, int64_t k, T* xs, T* ys) {
  if (k <= 0) throw ConfigError("sampling grid needs k >= 1, got " + std::to_string(k));
  const double stepx = (g.x2 - g.x1) / static_cast<double>(k);
  const double stepy = (g.y2 - g.y1) / static_cast<double>(k);
  for (int64_t b = 0; b < k; ++b)
    xs[b] = static_cast<T>(g.x1 + (static_cast<double>(b) + 0.5) * stepx);
  for (int64_t a = 0; a < k; ++a)
    ys[a] = static_cast<T>(g.y1 + (static_cast<double>(a) + 0.5) * stepy);
}

namespace {

template <class T>
void check_coord(T px, T py) {
  if (std::isnan(px) || std::isnan(py))
    throw ArgumentError("bilinear sample got NaN coordinates");
}

// Core fast path on raw [H, W, C] data; out must hold C zeros-to-be.
template <class T>
void bilinear_point(const T* a, int64_t h, int64_t w, int64_t c, T px, T py, T* out) {
  check_coord(px, py);
  for (int64_t ch = 0; ch < c; ++ch) out[ch] = T(0);
  T fx0 = std::floor(px), fy0 = std::floor(py);
  T wx1 = px - fx0, wy1 = py - fy0;
  T wx0 = T(1) - wx1, wy0 = T(1) - wy1;
  int64_t x0 = static_cast<int64_t>(fx0), y0 = static_cast<int64_t>(fy0);
  const int64_t xi[2] = {x0, x0 + 1};
  const int64_t yi[2] = {y0, y0 + 1};
  const T wx[2] = {wx0, wx1};
  const T wy[2] = {wy0, wy1};
  for (int iy = 0; iy < 2; ++iy) {
    if (yi[iy] < 0 || yi[iy] >= h) continue;
    for (int ix = 0; ix < 2; ++ix) {
      if (xi[ix] < 0 || xi[ix] >= w) continue;
      T weight = wx[ix] * wy[iy];
      if (weight == T(0)) continue;  // keeps integer coordinates exact
      const T* src = a + (yi[iy] * w + xi[ix]) * c;
      for (int64_t ch = 0; ch < c; ++ch) out[ch] += weight * src[ch];
    }
  }
}

template <class T>
void bilinear_point_adjoint(const T* a, int64_t h, int64_t w, int64_t c, T px, T py, const T* g,
                            T* da, T& dpx, T& dpy) {
  check_coord(px, py);
  T fx0 = std::floor(px), fy0 = std::floor(py);
  T wx1 = px - fx0, wy1 = py - fy0;
  T wx0 = T(1) - wx1, wy0 = T(1) - wy1;
  int64_t x0 = static_cast<int64_t>(fx0), y0 = static_cast<int64_t>(fy0);
  // Within the cell [x0, x0+1] the near tap's weight falls at rate 1 and the
  // far tap's grows at rate 1, always.  On a lattice point this picks the
  // right-sided derivative, so the coordinate gradient stays alive when a
  // sample sits exactly on a pixel center (the starting state for the
  // fixed-tiling-equivalent geometry).
  const int64_t xi[2] = {x0, x0 + 1};
  const int64_t yi[2] = {y0, y0 + 1};
  const T wx[2] = {wx0, wx1};
  const T wy[2] = {wy0, wy1};
  const T dwx[2] = {T(-1), T(1)};
  const T dwy[2] = {T(-1), T(1)};
  dpx = T(0);
  dpy = T(0);
  for (int iy = 0; iy < 2; ++iy) {
    if (yi[iy] < 0 || yi[iy] >= h) continue;
    for (int ix = 0; ix < 2; ++ix) {
      if (xi[ix] < 0 || xi[ix] >= w) continue;
      T weight = wx[ix] * wy[iy];
      int64_t base = (yi[iy] * w + xi[ix]) * c;
      T dot = T(0);
      for (int64_t ch = 0; ch < c; ++ch) dot += g[ch] * a[base + ch];
      if (weight != T(0))  // keeps integer-coordinate value grads exact
        for (int64_t ch = 0; ch < c; ++ch) da[base + ch] += weight * g[ch];
      dpx += dwx[ix] * wy[iy] * dot;
      dpy += wx[ix] * dwy[iy] * dot;
    }
  }
}

template <class T>
void require_map(const TensorT<T>& a) {
  if (a.rank() != 3)
    throw ShapeError("bilinear sample expects an [H, W, C] map, got " +
                     shape_to_string(a.shape()));
}

}  // namespace

template <class T>
void bilinear_sample(const TensorT<T>& a, T px, T py, T* out) {
  require_map(a);
  bilinear_point(a.data(), a.extent(0), a.extent(1), a.extent(2), px, py, out);
}

template <class T>
TensorT<T> bilinear_sample(const TensorT<T>& a, T px, T py) {
  require_map(a);
  TensorT<T> out({a.extent(2)});
  bilinear_point(a.data(), a.extent(0), a.extent(1), a.extent(2), px, py, out.data());
  return out;
}

template <class T>
TensorT<T> bilinear_sample_bruteforce(const TensorT<T>& a, T px, T py) {
  require_map(a);
  check_coord(px, py);
  int64_t h = a.extent(0), w = a.extent(1), c = a.extent(2);
  TensorT<T> out({c});
  const T* src = a.data();
  for (int64_t qy = 0; qy < h; ++qy) {
    for (int64_t qx = 0; qx < w; ++qx) {
      T tx = px - static_cast<T>(qx);
      T ty = py - static_cast<T>(qy);
      T kx = std::max(T(0), T(1) - std::fabs(tx));
      T ky = std::max(T(0), T(1) - std::fabs(ty));
      T weight = kx * ky;
      const T* p = src + (qy * w + qx) * c;
      for (int64_t ch = 0; ch < c; ++ch) out.data()[ch] += weight * p[ch];
    }
  }
  return out;
}

template <class T>
void bilinear_sample_adjoint(const TensorT<T>& a, T px, T py, const T* gout, TensorT<T>& da,
                             T& dpx, T& dpy) {
  require_map(a);
  if (!da.same_shape(a))
    throw ShapeError("bilinear adjoint accumulator shape " + shape_to_string(da.shape()) +
                     " does not match map " + shape_to_string(a.shape()));
  bilinear_point_adjoint(a.data(), a.extent(0), a.extent(1), a.extent(2), px, py, gout, da.data(),
                         dpx, dpy);
}

template <class T>
TensorT<T> gather_patch_windows(const TensorT<T>& a, const PatchGridSpec& grid) {
  if (a.rank() != 4)
    throw ShapeError("gather_patch_windows expects [B, H, W, C], got " +
                     shape_to_string(a.shape()));
  if (a.extent(1) != grid.input_h || a.extent(2) != grid.input_w)
    throw ShapeError("map " + shape_to_string(a.shape()) + " does not match grid input " +
                     std::to_string(grid.input_h) + "x" + std::to_string(grid.input_w));
  int64_t bsz = a.extent(0), w = grid.input_w, c = a.extent(3), s = grid.patch;
  TensorT<T> out({bsz * grid.n_patches, s * s * c});
  T* dst = out.data();
  for (int64_t b = 0; b < bsz; ++b) {
    const T* img = a.data() + b * grid.input_h * w * c;
    for (int64_t pr = 0; pr < grid.n_rows; ++pr) {
      for (int64_t pc = 0; pc < grid.n_cols; ++pc) {
        for (int64_t ay = 0; ay < s; ++ay) {
          const T* src = img + ((pr * s + ay) * w + pc * s) * c;
          std::memcpy(dst, src, sizeof(T) * static_cast<size_t>(s * c));
          dst += s * c;
        }
      }
    }
  }
  return out;
}

template <class T>
void scatter_patch_windows_add(TensorT<T>& da, const TensorT<T>& gwin, const PatchGridSpec& grid) {
  if (da.rank() != 4)
    throw ShapeError("scatter_patch_windows_add expects [B, H, W, C] accumulator, got " +
                     shape_to_string(da.shape()));
  int64_t bsz = da.extent(0), w = grid.input_w, c = da.extent(3), s = grid.patch;
  if (gwin.rank() != 2 || gwin.extent(0) != bsz * grid.n_patches ||
      gwin.extent(1) != s * s * c)
    throw ShapeError("window gradient " + shape_to_string(gwin.shape()) +
                     " does not match grid/accumulator " + shape_to_string(da.shape()));
  const T* src = gwin.data();
  for (int64_t b = 0; b < bsz; ++b) {
    T* img = da.data() + b * grid.input_h * w * c;
    for (int64_t pr = 0; pr < grid.n_rows; ++pr) {
      for (int64_t pc = 0; pc < grid.n_cols; ++pc) {
        for (int64_t ay = 0; ay < s; ++ay) {
          T* dst = img + ((pr * s + ay) * w + pc * s) * c;
          for (int64_t i = 0; i < s * c; ++i) dst[i] += src[i];
          src += s * c;
        }
      }
    }
  }
}

template <class T>
VanillaPatchEmbedT<T>::VanillaPatchEmbedT(std::string name, PatchGridSpec grid, int64_t in_ch,
                                          int64_t out_ch)
    : grid_(grid),
      in_ch_(in_ch),
      out_ch_(out_ch),
      proj_(name + ".proj", grid.patch * grid.patch * in_ch, out_ch) {}

namespace {

template <class T>
TensorT<T> as_batched(const TensorT<T>& a, int64_t in_ch, const PatchGridSpec& grid,
                      bool& batched, const char* who) {
  TensorT<T> out;
  if (a.rank() == 3) {
    batched = false;
    out = a.reshaped({1, a.extent(0), a.extent(1), a.extent(2)});
  } else if (a.rank() == 4) {
    batched = true;
    out = a;
  } else {
    throw ShapeError(std::string(who) + " expects [B, H, W, C] or [H, W, C], got " +
                     shape_to_string(a.shape()));
  }
  if (out.extent(1) != grid.input_h || out.extent(2) != grid.input_w || out.extent(3) != in_ch)
    throw ShapeError(std::string(who) + " got " + shape_to_string(a.shape()) + ", expected " +
                     std::to_string(grid.input_h) + "x" + std::to_string(grid.input_w) + "x" +
                     std::to_string(in_ch));
  return out;
}

}  // namespace

template <class T>
TensorT<T> VanillaPatchEmbedT<T>::forward(const TensorT<T>& a_in) {
  TensorT<T> a = as_batched(a_in, in_ch_, grid_, batched_input_, "patch embed");
  int64_t bsz = a.extent(0);
  TensorT<T> windows = gather_patch_windows(a, grid_);
  TensorT<T> tokens = proj_.forward(windows);
  return batched_input_ ? tokens.reshaped({bsz, grid_.n_patches, out_ch_})
                        : tokens.reshaped({grid_.n_patches, out_ch_});
}

template <class T>
TensorT<T> VanillaPatchEmbedT<T>::backward(const TensorT<T>& gy) {
  int64_t n = grid_.n_patches;
  TensorT<T> g2 = gy.reshaped({gy.numel() / out_ch_, out_ch_});
  TensorT<T> gwin = proj_.backward(g2);
  int64_t bsz = g2.extent(0) / n;
  TensorT<T> da({bsz, grid_.input_h, grid_.input_w, in_ch_});
  scatter_patch_windows_add(da, gwin, grid_);
  return batched_input_ ? da : da.reshaped({grid_.input_h, grid_.input_w, in_ch_});
}

template <class T>
DePatchEmbedT<T>::DePatchEmbedT(std::string name, PatchGridSpec grid, int64_t in_ch,
                                int64_t out_ch, DePatchConfig cfg)
    : grid_(grid), in_ch_(in_ch), out_ch_(out_ch), cfg_(cfg) {
  if (cfg_.k < 1) throw ConfigError("sample count k must be >= 1, got " + std::to_string(cfg_.k));
  if (cfg_.r_off < 0) throw ConfigError("offset range must be >= 0");
  if (!(cfg_.r_sc > 1)) throw ConfigError("scale range must exceed 1");
  if (has_predictor()) {
    fp_ = LinearT<T>(name + ".fp", grid.patch * grid.patch * in_ch, out_ch);
    if (cfg_.predict_offsets) off_ = LinearT<T>(name + ".off", out_ch, 2, /*bias=*/false);
    if (cfg_.predict_scales) sc_ = LinearT<T>(name + ".scale", out_ch, 2, /*bias=*/true);
  }
  proj_ = LinearT<T>(name + ".proj", cfg_.k * cfg_.k * in_ch, out_ch);
  if (cfg_.predict_scales) sc_.b().value.fill(scale_bias_init(static_cast<T>(cfg_.r_sc)));
}

template <class T>
void DePatchEmbedT<T>::compute_geometry(const TensorT<T>* off_pre, const TensorT<T>* sc_pre,
                                        int64_t n_total,
                                        std::vector<PatchGeometry>& geom) const {
  // tanh runs in T so the identity-start values are exact in the layer's own
  // arithmetic; everything after the squash is double.
  const double s = static_cast<double>(grid_.patch);
  const double off_gain = cfg_.r_off * s;
  const double sc_gain = cfg_.r_sc * s;
  geom.resize(static_cast<size_t>(n_total));
  for (int64_t row = 0; row < n_total; ++row) {
    int64_t i = row % grid_.n_patches;
    int64_t pr = i / grid_.n_cols, pc = i % grid_.n_cols;
    PatchGeometry& g = geom[static_cast<size_t>(row)];
    g.x_ct = grid_.center_x(pc);
    g.y_ct = grid_.center_y(pr);
    if (off_pre) {
      g.dx = off_gain * static_cast<double>(std::tanh(off_pre->data()[row * 2 + 0]));
      g.dy = off_gain * static_cast<double>(std::tanh(off_pre->data()[row * 2 + 1]));
    } else {
      g.dx = 0.0;
      g.dy = 0.0;
    }
    if (sc_pre) {
      T tw = std::tanh(sc_pre->data()[row * 2 + 0]);
      T th = std::tanh(sc_pre->data()[row * 2 + 1]);
      g.sw = tw > T(0) ? sc_gain * static_cast<double>(tw) : 0.0;
      g.sh = th > T(0) ? sc_gain * static_cast<double>(th) : 0.0;
    } else {
      g.sw = s;
      g.sh = s;
    }
    g.x1 = g.x_ct + g.dx - g.sw / 2.0;
    g.x2 = g.x_ct + g.dx + g.sw / 2.0;
    g.y1 = g.y_ct + g.dy - g.sh / 2.0;
    g.y2 = g.y_ct + g.dy + g.sh / 2.0;
  }
}

template <class T>
TensorT<T> DePatchEmbedT<T>::forward(const TensorT<T>& a_in) {
  TensorT<T> a = as_batched(a_in, in_ch_, grid_, batched_input_, "deformable patch embed");
  int64_t bsz = a.extent(0);
  int64_t n = grid_.n_patches;
  int64_t k = cfg_.k;
  int64_t n_total = bsz * n;

  if (has_predictor()) {
    TensorT<T> windows = gather_patch_windows(a, grid_);
    TensorT<T> u = fp_.forward(windows);
    off_pre_ = cfg_.predict_offsets ? off_.forward(u) : TensorT<T>();
    sc_pre_ = cfg_.predict_scales ? sc_.forward(u) : TensorT<T>();
  } else {
    off_pre_ = TensorT<T>();
    sc_pre_ = TensorT<T>();
  }
  compute_geometry(off_pre_.defined() ? &off_pre_ : nullptr,
                   sc_pre_.defined() ? &sc_pre_ : nullptr, n_total, geom_);

  coords_ = TensorT<T>({n_total, k * k, 2});
  TensorT<T> sampled({n_total, k * k * in_ch_});
  std::vector<T> xs(static_cast<size_t>(k)), ys(static_cast<size_t>(k));
  const int64_t img_stride = grid_.input_h * grid_.input_w * in_ch_;
  for (int64_t row = 0; row < n_total; ++row) {
    const T* img = a.data() + (row / n) * img_stride;
    sampling_grid(geom_[static_cast<size_t>(row)], k, xs.data(), ys.data());
    T* crow = coords_.data() + row * k * k * 2;
    T* srow = sampled.data() + row * k * k * in_ch_;
    for (int64_t ay = 0; ay < k; ++ay) {
      for (int64_t bx = 0; bx < k; ++bx) {
        int64_t p = ay * k + bx;
        crow[p * 2 + 0] = xs[static_cast<size_t>(bx)];
        crow[p * 2 + 1] = ys[static_cast<size_t>(ay)];
        bilinear_point(img, grid_.input_h, grid_.input_w, in_ch_, xs[static_cast<size_t>(bx)],
                       ys[static_cast<size_t>(ay)], srow + p * in_ch_);
      }
    }
  }
  TensorT<T> tokens = proj_.forward(sampled);
  a_cache_ = std::move(a);
  has_cache_ = true;
  return batched_input_ ? tokens.reshaped({bsz, n, out_ch_}) : tokens.reshaped({n, out_ch_});
}

template <class T>
TensorT<T> DePatchEmbedT<T>::backward(const TensorT<T>& gy) {
  if (!has_cache_) throw StateError("deformable patch embed backward without forward cache");
  has_cache_ = false;
  int64_t n = grid_.n_patches;
  int64_t k = cfg_.k;
  int64_t bsz = a_cache_.extent(0);
  int64_t n_total = bsz * n;
  if (gy.numel() != n_total * out_ch_)
    throw ShapeError("deformable patch embed backward got " + shape_to_string(gy.shape()));
  TensorT<T> g2 = gy.reshaped({n_total, out_ch_});
  TensorT<T> gsamp = proj_.backward(g2);

  TensorT<T> da({bsz, grid_.input_h, grid_.input_w, in_ch_});
  const bool want_geom = has_predictor();
  std::vector<T> ddx, ddy, dsw, dsh;
  if (want_geom) {
    ddx.assign(static_cast<size_t>(n_total), T(0));
    ddy.assign(static_cast<size_t>(n_total), T(0));
    dsw.assign(static_cast<size_t>(n_total), T(0));
    dsh.assign(static_cast<size_t>(n_total), T(0));
  }
  const int64_t img_stride = grid_.input_h * grid_.input_w * in_ch_;
  const T invk = T(1) / static_cast<T>(k);
  for (int64_t row = 0; row < n_total; ++row) {
    const T* img = a_cache_.data() + (row / n) * img_stride;
    T* dimg = da.data() + (row / n) * img_stride;
    const T* crow = coords_.data() + row * k * k * 2;
    const T* grow = gsamp.data() + row * k * k * in_ch_;
    for (int64_t ay = 0; ay < k; ++ay) {
      for (int64_t bx = 0; bx < k; ++bx) {
        int64_t p = ay * k + bx;
        T dpx, dpy;
        bilinear_point_adjoint(img, grid_.input_h, grid_.input_w, in_ch_, crow[p * 2 + 0],
                               crow[p * 2 + 1], grow + p * in_ch_, dimg, dpx, dpy);
        if (want_geom) {
          // x = x_ct + dx + sw * ((bx + 0.5)/k - 0.5), same for y.
          T ub = (static_cast<T>(bx) + T(0.5)) * invk - T(0.5);
          T ua = (static_cast<T>(ay) + T(0.5)) * invk - T(0.5);
          ddx[static_cast<size_t>(row)] += dpx;
          ddy[static_cast<size_t>(row)] += dpy;
          dsw[static_cast<size_t>(row)] += dpx * ub;
          dsh[static_cast<size_t>(row)] += dpy * ua;
        }
      }
    }
  }

  if (want_geom) {
    const T s = static_cast<T>(grid_.patch);
    const T off_gain = static_cast<T>(cfg_.r_off) * s;
    const T sc_gain = static_cast<T>(cfg_.r_sc) * s;
    TensorT<T> du;
    if (cfg_.predict_offsets) {
      TensorT<T> doff({n_total, 2});
      for (int64_t row = 0; row < n_total; ++row) {
        T tx = std::tanh(off_pre_.data()[row * 2 + 0]);
        T ty = std::tanh(off_pre_.data()[row * 2 + 1]);
        doff.data()[row * 2 + 0] = ddx[static_cast<size_t>(row)] * off_gain * (T(1) - tx * tx);
        doff.data()[row * 2 + 1] = ddy[static_cast<size_t>(row)] * off_gain * (T(1) - ty * ty);
      }
      du = off_.backward(doff);
    }
    if (cfg_.predict_scales) {
      TensorT<T> dsc({n_total, 2});
      for (int64_t row = 0; row < n_total; ++row) {
        T tw = std::tanh(sc_pre_.data()[row * 2 + 0]);
        T th = std::tanh(sc_pre_.data()[row * 2 + 1]);
        dsc.data()[row * 2 + 0] =
            tw > T(0) ? dsw[static_cast<size_t>(row)] * sc_gain * (T(1) - tw * tw) : T(0);
        dsc.data()[row * 2 + 1] =
            th > T(0) ? dsh[static_cast<size_t>(row)] * sc_gain * (T(1) - th * th) : T(0);
      }
      TensorT<T> du2 = sc_.backward(dsc);
      if (du.defined())
        ops::add_inplace(du, du2);
      else
        du = std::move(du2);
    }
    TensorT<T> gwin = fp_.backward(du);
    scatter_patch_windows_add(da, gwin, grid_);
  }
  return batched_input_ ? da : da.reshaped({grid_.input_h, grid_.input_w, in_ch_});
}

template <class T>
std::vector<PatchGeometry> DePatchEmbedT<T>::predict_geometry(const TensorT<T>& a_single) {
  if (a_single.rank() != 3)
    throw ShapeError("predict_geometry expects one [H, W, C] map, got " +
                     shape_to_string(a_single.shape()));
  int64_t n = grid_.n_patches;
  std::vector<PatchGeometry> geom;
  if (!has_predictor()) {
    compute_geometry(nullptr, nullptr, n, geom);
    return geom;
  }
  // Plain affine evaluation against the current weights; deliberately does
  // not disturb the training caches.
  TensorT<T> a4 = a_single.reshaped({1, a_single.extent(0), a_single.extent(1), a_single.extent(2)});
  TensorT<T> windows = gather_patch_windows(a4, grid_);
  TensorT<T> u({n, out_ch_});
  {
    T* up = u.data();
    const T* bp = fp_.b().value.data();
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < out_ch_; ++j) up[r * out_ch_ + j] = bp[j];
    ops::matmul_accum(windows.data(), fp_.w().value.data(), u.data(), n,
                      fp_.in_features(), out_ch_);
  }
  TensorT<T> off_pre, sc_pre;
  if (cfg_.predict_offsets) {
    off_pre = TensorT<T>({n, 2});
    ops::matmul_accum(u.data(), off_.w().value.data(), off_pre.data(), n, out_ch_, 2);
  }
  if (cfg_.predict_scales) {
    sc_pre = TensorT<T>({n, 2});
    T* sp = sc_pre.data();
    const T* bp = sc_.b().value.data();
    for (int64_t r = 0; r < n; ++r) {
      sp[r * 2 + 0] = bp[0];
      sp[r * 2 + 1] = bp[1];
    }
    ops::matmul_accum(u.data(), sc_.w().value.data(), sc_pre.data(), n, out_ch_, 2);
  }
  compute_geometry(off_pre.defined() ? &off_pre : nullptr, sc_pre.defined() ? &sc_pre : nullptr,
                   n, geom);
  return geom;
}

template <class T>
void DePatchEmbedT<T>::init_params(const Rng& base, InitKind predictor_mode) {
  if (has_predictor()) {
    fp_.init_weight(base, InitKind::TruncNormal);
    if (cfg_.predict_offsets) off_.init_weight(base, predictor_mode);
    if (cfg_.predict_scales) sc_.init_weight(base, predictor_mode);
  }
  proj_.init_weight(base, InitKind::TruncNormal);
}

template <class T>
std::vector<ParamT<T>*> DePatchEmbedT<T>::params() {
  std::vector<ParamT<T>*> out;
  if (has_predictor()) {
    out.push_back(&fp_.w());
    out.push_back(&fp_.b());
    if (cfg_.predict_offsets) out.push_back(&off_.w());
    if (cfg_.predict_scales) {
      out.push_back(&sc_.w());
      out.push_back(&sc_.b());
    }
  }
  out.push_back(&proj_.w());
  out.push_back(&proj_.b());
  return out;
}

#define DPT_INSTANTIATE_DEPATCH(T)                                                              \
  template T scale_bias_init<T>(T);                                                            \
  template void sampling_grid<T>(const PatchGeometry&, int64_t, T*, T*);                      \
  template void bilinear_sample<T>(const TensorT<T>&, T, T, T*);                               \
  template TensorT<T> bilinear_sample<T>(const TensorT<T>&, T, T);                             \
  template TensorT<T> bilinear_sample_bruteforce<T>(const TensorT<T>&, T, T);                  \
  template void bilinear_sample_adjoint<T>(const TensorT<T>&, T, T, const T*, TensorT<T>&, T&, \
                                           T&);                                                \
  template TensorT<T> gather_patch_windows<T>(const TensorT<T>&, const PatchGridSpec&);        \
  template void scatter_patch_windows_add<T>(TensorT<T>&, const TensorT<T>&,                   \
                                             const PatchGridSpec&);                            \
  template class VanillaPatchEmbedT<T>;                                                        \
  template class DePatchEmbedT<T>;

DPT_INSTANTIATE_DEPATCH(float)
DPT_INSTANTIATE_DEPATCH(double)

#undef DPT_INSTANTIATE_DEPATCH

}  // namespace dpt
