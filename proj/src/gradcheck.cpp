#include "dpt/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "dpt/model.hpp"

namespace dpt {

namespace {

constexpr double kH = 1e-5;
constexpr double kLayerTol = 1e-4;
constexpr double kModelTol = 1e-3;
constexpr int64_t kProbes = 120;
constexpr double kKinkMargin = 1e-3;  // min fractional distance of any
                                      // sampling coordinate to an integer

using Tensor = TensorT<double>;

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max(1e-6, std::abs(a) + std::abs(n));
}

// A probe-able span of scalars paired with its analytic gradient.
struct Slot {
  std::string name;
  double* data = nullptr;
  const double* grad = nullptr;
  int64_t n = 0;
};

void add_param_slots(std::vector<Slot>& slots, const std::vector<ParamT<double>*>& params) {
  for (auto* p : params)
    slots.push_back({p->name, p->value.data(), p->grad.data(), p->value.numel()});
}

FDReport fd_sweep(const std::string& component, double tol, const std::vector<Slot>& slots,
                  const std::function<double()>& loss, Rng& rng, bool corrupt) {
  FDReport rep;
  rep.component = component;
  rep.tol = tol;
  rep.probes = kProbes;
  int64_t total = 0;
  for (const auto& s : slots) total += s.n;
  if (total <= 0) throw StateError("gradcheck '" + component + "' has nothing to probe");

  for (int64_t p = 0; p < kProbes; ++p) {
    int64_t t = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(total)));
    size_t si = 0;
    while (t >= slots[si].n) {
      t -= slots[si].n;
      ++si;
    }
    const Slot& slot = slots[si];
    const double saved = slot.data[t];
    slot.data[t] = saved + kH;
    const double lp = loss();
    slot.data[t] = saved - kH;
    const double lm = loss();
    slot.data[t] = saved;
    const double numeric = (lp - lm) / (2.0 * kH);
    double analytic = slot.grad[t];
    if (corrupt && p == 0) analytic += std::max(1.0, std::abs(analytic));
    const double r = rel_err(analytic, numeric);
    if (r >= rep.max_rel) {
      rep.max_rel = r;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%s[%lld] analytic=%.10g numeric=%.10g",
                    slot.name.c_str(), static_cast<long long>(t), analytic, numeric);
      rep.worst = buf;
    }
  }
  rep.pass = rep.max_rel <= tol;
  return rep;
}

void fill_normal(Tensor& t, Rng& rng, double std_dev, double mean = 0.0) {
  for (int64_t i = 0; i < t.numel(); ++i) t.flat(i) = mean + std_dev * rng.normal();
}

// Upstream weights bounded away from zero so every output matters.
Tensor upstream_like(const Tensor& y, Rng& rng) {
  Tensor r(y.shape());
  for (int64_t i = 0; i < r.numel(); ++i) {
    const double mag = rng.uniform(0.5, 1.5);
    r.flat(i) = rng.uniform() < 0.5 ? -mag : mag;
  }
  return r;
}

double weighted_sum(const Tensor& y, const Tensor& r) {
  double s = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) s += y.flat(i) * r.flat(i);
  return s;
}

void jitter_params(const std::vector<ParamT<double>*>& params, Rng& rng, double std_dev) {
  for (auto* p : params)
    for (int64_t i = 0; i < p->value.numel(); ++i) p->value.flat(i) += std_dev * rng.normal();
}

double frac_distance_to_int(double v) { return std::abs(v - std::round(v)); }

double kink_margin(const Tensor& coords) {
  double m = 1.0;
  for (int64_t i = 0; i < coords.numel(); ++i)
    m = std::min(m, frac_distance_to_int(coords.flat(i)));
  return m;
}

FDReport check_matmul(Rng& rng, bool corrupt) {
  Tensor a({7, 9}), b({9, 11});
  fill_normal(a, rng, 0.7);
  fill_normal(b, rng, 0.7);
  Tensor y = ops::matmul(a, b);
  Tensor r = upstream_like(y, rng);
  Tensor da = ops::matmul(r, ops::transpose2d(b));
  Tensor db = ops::matmul_at(a, r);
  std::vector<Slot> slots{{"a", a.data(), da.data(), a.numel()},
                          {"b", b.data(), db.data(), b.numel()}};
  auto loss = [&]() { return weighted_sum(ops::matmul(a, b), r); };
  return fd_sweep("matmul", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_softmax(Rng& rng, bool corrupt) {
  Tensor x({6, 13});
  fill_normal(x, rng, 2.0);
  Tensor y = ops::softmax_lastdim(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = ops::softmax_lastdim_backward(y, r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  auto loss = [&]() { return weighted_sum(ops::softmax_lastdim(x), r); };
  return fd_sweep("softmax", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_activation(const std::string& name, Rng& rng, bool corrupt) {
  Tensor x({240});
  for (int64_t i = 0; i < x.numel(); ++i) {
    double v = 0.0;
    do {
      v = rng.uniform(-2.0, 2.0);
    } while (std::abs(v) < 1e-3);  // keeps relu probes off its kink
    x.flat(i) = v;
  }
  auto fwd = [&name](const Tensor& t) {
    if (name == "tanh") return ops::tanh_op(t);
    if (name == "relu") return ops::relu_op(t);
    return ops::gelu_op(t);
  };
  Tensor y = fwd(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = name == "tanh"   ? ops::tanh_backward(x, r)
              : name == "relu" ? ops::relu_backward(x, r)
                               : ops::gelu_backward(x, r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  auto loss = [&]() { return weighted_sum(fwd(x), r); };
  return fd_sweep(name, kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_layernorm(Rng& rng, bool corrupt) {
  LayerNormT<double> ln("ln", 16);
  jitter_params({&ln.gamma(), &ln.beta()}, rng, 0.05);
  Tensor x({12, 16});
  fill_normal(x, rng, 1.0);
  Tensor y = ln.forward(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = ln.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, {&ln.gamma(), &ln.beta()});
  auto loss = [&]() { return weighted_sum(ln.forward(x), r); };
  return fd_sweep("layernorm", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_linear(Rng& rng, bool corrupt) {
  LinearT<double> lin("lin", 9, 13);
  jitter_params({&lin.w(), &lin.b()}, rng, 0.3);
  Tensor x({6, 9});
  fill_normal(x, rng, 1.0);
  Tensor y = lin.forward(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = lin.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, {&lin.w(), &lin.b()});
  auto loss = [&]() { return weighted_sum(lin.forward(x), r); };
  return fd_sweep("linear", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_vanilla_embed(Rng& rng, bool corrupt) {
  PatchGridSpec grid = PatchGridSpec::make(8, 8, 2);
  VanillaPatchEmbedT<double> ve("ve", grid, 3, 10);
  ve.init_params(Rng(rng.next_u64()));
  jitter_params({&ve.proj().b()}, rng, 0.1);
  Tensor x({1, 8, 8, 3});
  fill_normal(x, rng, 1.0);
  Tensor y = ve.forward(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = ve.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, {&ve.proj().w(), &ve.proj().b()});
  auto loss = [&]() { return weighted_sum(ve.forward(x), r); };
  return fd_sweep("vanilla_embed", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_bilinear(Rng& rng, bool corrupt) {
  const int64_t h = 9, w = 9, c = 4, npts = 60;
  Tensor a({h, w, c});
  fill_normal(a, rng, 1.0);
  Tensor coords({npts, 2});
  for (int64_t p = 0; p < npts; ++p) {
    double px = 0, py = 0;
    do {
      px = rng.uniform(-1.5, static_cast<double>(w) + 0.5);
    } while (frac_distance_to_int(px) < kKinkMargin);
    do {
      py = rng.uniform(-1.5, static_cast<double>(h) + 0.5);
    } while (frac_distance_to_int(py) < kKinkMargin);
    coords.at(p, 0) = px;
    coords.at(p, 1) = py;
  }
  Tensor r({npts, c});
  for (int64_t i = 0; i < r.numel(); ++i) r.flat(i) = rng.uniform(0.5, 1.5);

  Tensor da(a.shape());
  Tensor dcoords(coords.shape());
  for (int64_t p = 0; p < npts; ++p) {
    double dpx = 0, dpy = 0;
    bilinear_sample_adjoint(a, coords.at(p, 0), coords.at(p, 1), r.data() + p * c, da, dpx, dpy);
    dcoords.at(p, 0) = dpx;
    dcoords.at(p, 1) = dpy;
  }
  std::vector<Slot> slots{{"map", a.data(), da.data(), a.numel()},
                          {"coords", coords.data(), dcoords.data(), coords.numel()}};
  auto loss = [&]() {
    double s = 0.0;
    double buf[c];
    for (int64_t p = 0; p < npts; ++p) {
      bilinear_sample(a, coords.at(p, 0), coords.at(p, 1), buf);
      for (int64_t ch = 0; ch < c; ++ch) s += buf[ch] * r.at(p, ch);
    }
    return s;
  };
  return fd_sweep("bilinear", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_depatch(Rng& rng, bool corrupt) {
  PatchGridSpec grid = PatchGridSpec::make(8, 8, 2);
  DePatchConfig cfg;
  cfg.k = 3;
  DePatchEmbedT<double> dp("dp", grid, 3, 8, cfg);
  Tensor x({1, 8, 8, 3});
  bool placed = false;
  for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
    dp.init_params(Rng(rng.next_u64()), InitKind::TruncNormal);
    // Larger head weights give the probes nontrivial geometry.
    for (auto* p : {&dp.offset_head().w(), &dp.scale_head().w()})
      for (int64_t i = 0; i < p->value.numel(); ++i) p->value.flat(i) *= 4.0;
    fill_normal(x, rng, 1.0);
    dp.forward(x);
    placed = kink_margin(dp.last_coords()) >= kKinkMargin;
  }
  if (!placed) throw StateError("could not place depatch probes away from kernel kinks");

  Tensor y = dp.forward(x);
  Tensor r = upstream_like(y, rng);
  Tensor dx = dp.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, dp.params());
  auto loss = [&]() { return weighted_sum(dp.forward(x), r); };
  return fd_sweep("depatch", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_attention(Rng& rng, bool corrupt) {
  SRAttentionT<double> at("at", 12, 2, 2);
  jitter_params(at.params(), rng, 0.15);
  Tensor x({2, 16, 12});
  fill_normal(x, rng, 1.0);
  Tensor y = at.forward(x, 4, 4);
  Tensor r = upstream_like(y, rng);
  Tensor dx = at.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, at.params());
  auto loss = [&]() { return weighted_sum(at.forward(x, 4, 4), r); };
  return fd_sweep("attention", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_block(Rng& rng, bool corrupt) {
  BlockT<double> bl("bl", 12, 2, 2, 2);
  jitter_params(bl.params(), rng, 0.15);
  Tensor x({2, 16, 12});
  fill_normal(x, rng, 1.0);
  Tensor y = bl.forward(x, 4, 4);
  Tensor r = upstream_like(y, rng);
  Tensor dx = bl.backward(r);
  std::vector<Slot> slots{{"x", x.data(), dx.data(), x.numel()}};
  add_param_slots(slots, bl.params());
  auto loss = [&]() { return weighted_sum(bl.forward(x, 4, 4), r); };
  return fd_sweep("block", kLayerTol, slots, loss, rng, corrupt);
}

FDReport check_model(Rng& rng, bool corrupt) {
  ModelConfig mc = ModelConfig::preset("toy");
  mc.input_size = 32;
  mc.num_classes = 6;
  mc.init = "truncated-normal";

  Tensor x({2, 32, 32, 3});
  std::vector<int64_t> labels{1, 4};
  std::unique_ptr<ModelT<double>> model;
  bool placed = false;
  for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
    model = std::make_unique<ModelT<double>>(mc, rng.next_u64());
    for (int64_t s : mc.depatch_stages) {
      const std::string base = "stage" + std::to_string(s) + ".embed.";
      for (const char* head : {"off.w", "scale.w"}) {
        ParamT<double>* p = model->find_param(base + head);
        for (int64_t i = 0; i < p->value.numel(); ++i) p->value.flat(i) *= 4.0;
      }
    }
    fill_normal(x, rng, 1.0);
    model->forward(x);
    placed = true;
    for (int64_t s : mc.depatch_stages) {
      const auto& dp = model->stage(s - 1).depatch;
      if (kink_margin(dp->last_coords()) < kKinkMargin) placed = false;
    }
  }
  if (!placed) throw StateError("could not place model probes away from kernel kinks");

  model->zero_grad();
  model->forward(x);
  model->backward(labels);
  std::vector<Slot> slots;
  add_param_slots(slots, model->params());
  auto loss = [&]() { return static_cast<double>(model->loss(model->forward(x), labels)); };
  return fd_sweep("model", kModelTol, slots, loss, rng, corrupt);
}

}  // namespace

std::vector<std::string> gradcheck_components() {
  return {"matmul", "softmax",       "tanh",     "relu",    "gelu",
          "layernorm", "linear",     "vanilla_embed", "bilinear", "depatch",
          "attention", "block",      "model"};
}

std::vector<FDReport> run_gradcheck(uint64_t seed, const std::string& component,
                                    const std::string& corrupt) {
  const auto known = gradcheck_components();
  auto is_known = [&known](const std::string& name) {
    for (const auto& k : known)
      if (k == name) return true;
    return false;
  };
  if (!component.empty() && !is_known(component))
    throw ArgumentError("unknown gradcheck component '" + component + "'");
  if (!corrupt.empty() && !is_known(corrupt))
    throw ArgumentError("unknown gradcheck component '" + corrupt + "'");

  std::vector<FDReport> out;
  for (const auto& name : known) {
    if (!component.empty() && component != name) continue;
    Rng rng = Rng(seed).fork(name_stream(name));
    const bool bad = corrupt == name;
    if (name == "matmul") out.push_back(check_matmul(rng, bad));
    else if (name == "softmax") out.push_back(check_softmax(rng, bad));
    else if (name == "tanh" || name == "relu" || name == "gelu")
      out.push_back(check_activation(name, rng, bad));
    else if (name == "layernorm") out.push_back(check_layernorm(rng, bad));
    else if (name == "linear") out.push_back(check_linear(rng, bad));
    else if (name == "vanilla_embed") out.push_back(check_vanilla_embed(rng, bad));
    else if (name == "bilinear") out.push_back(check_bilinear(rng, bad));
    else if (name == "depatch") out.push_back(check_depatch(rng, bad));
    else if (name == "attention") out.push_back(check_attention(rng, bad));
    else if (name == "block") out.push_back(check_block(rng, bad));
    else out.push_back(check_model(rng, bad));
  }
  return out;
}

}  // namespace dpt
