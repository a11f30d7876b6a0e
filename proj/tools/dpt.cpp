#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpt/data.hpp"
#include "dpt/gradcheck.hpp"
#include "dpt/model.hpp"
#include "dpt/runconfig.hpp"
#include "dpt/train.hpp"
#include "dpt/viz.hpp"

namespace {

using dpt::ModelConfig;

struct ConfigArgs {
  std::string config_file;
  std::vector<std::string> overrides;
  int64_t seed = -1;
  bool serial = false;

  dpt::RunConfig resolve() const {
    std::vector<std::string> ov = overrides;
    if (seed >= 0) ov.push_back("seed=" + std::to_string(seed));
    if (serial) ov.push_back("serial=true");
    return dpt::load_run_config(config_file, ov);
  }
};

void add_config_options(CLI::App* sub, ConfigArgs& args) {
  sub->add_option("--config", args.config_file, "JSON run-config file");
  sub->add_option("--set", args.overrides, "dotted override, e.g. --set model.k=2");
  sub->add_option("--seed", args.seed, "override the run seed");
  sub->add_flag("--serial", args.serial,
                "force the deterministic serial path (this build is always serial)");
}

int run_gradcheck_cmd(uint64_t seed, const std::string& component, const std::string& corrupt) {
  auto reports = dpt::run_gradcheck(seed, component, corrupt);
  std::printf("%-14s %7s %12s %9s %s\n", "component", "probes", "max_rel", "tol", "status");
  int failures = 0;
  for (const auto& r : reports) {
    std::printf("%-14s %7lld %12.3e %9.0e %s\n", r.component.c_str(),
                static_cast<long long>(r.probes), r.max_rel, r.tol, r.pass ? "pass" : "FAIL");
    if (!r.pass) {
      std::printf("  worst: %s\n", r.worst.c_str());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

// Frozen reference targets for the 224-input four-stage preset.
struct Target {
  const char* name;
  int64_t k;  // 0 = no deformable stages
  double params_target, params_tol;
  double macs_target, macs_tol;
};
constexpr Target kTargets[] = {
    {"baseline", 0, 13.23e6, 0.02, 1.94e9, 0.05},
    {"k=2", 2, 14.09e6, 0.02, 2.03e9, 0.05},
    {"k=3", 3, 15.15e6, 0.02, 2.14e9, 0.05},
    {"k=4", 4, 16.64e6, 0.02, 2.30e9, 0.05},
};

ModelConfig variant(const std::string& preset, int64_t k) {
  ModelConfig cfg = ModelConfig::preset(preset);
  if (k == 0) {
    cfg.depatch_stages.clear();
  } else {
    cfg.depatch_stages = {2, 3, 4};
    cfg.k = k;
  }
  return cfg;
}

int run_params_cmd(const std::string& preset) {
  const bool reference = preset == "pvt-tiny";
  const int64_t base = dpt::count_params(variant(preset, 0));
  std::printf("preset=%s\n", preset.c_str());
  std::printf("%-10s %12s %12s %12s %s\n", "model", "params", "target", "delta", "status");
  int failures = 0;
  for (const auto& t : kTargets) {
    ModelConfig cfg = variant(preset, t.k);
    const int64_t p = dpt::count_params(cfg);
    std::string status = "-";
    if (reference) {
      bool ok = std::abs(static_cast<double>(p) - t.params_target) <=
                t.params_tol * t.params_target;
      if (t.k == 2) {
        const double delta = static_cast<double>(p - base);
        ok = ok && delta >= 0.80e6 && delta <= 0.92e6;
      }
      status = ok ? "pass" : "FAIL";
      if (!ok) ++failures;
    }
    std::printf("%-10s %12lld %12.0f %12lld %s\n", t.name, static_cast<long long>(p),
                reference ? t.params_target : 0.0, static_cast<long long>(p - base),
                status.c_str());
  }
  // Per-stage contribution of the deformable embedding at the default k.
  for (int64_t s : {2, 3, 4}) {
    ModelConfig cfg = variant(preset, 0);
    cfg.depatch_stages = {s};
    std::printf("stage %lld embed delta (k=%lld): %lld params\n", static_cast<long long>(s),
                static_cast<long long>(cfg.k),
                static_cast<long long>(dpt::count_params(cfg) - base));
  }
  return failures == 0 ? 0 : 1;
}

int run_flops_cmd(const std::string& preset) {
  const bool reference = preset == "pvt-tiny";
  std::printf("preset=%s input=%lld\n", preset.c_str(),
              static_cast<long long>(ModelConfig::preset(preset).input_size));
  std::printf("%-10s %14s %14s %14s %s\n", "model", "macs", "flops", "target_macs", "status");
  int failures = 0;
  for (const auto& t : kTargets) {
    ModelConfig cfg = variant(preset, t.k);
    const dpt::MacsBreakdown mb = dpt::count_macs(cfg);
    std::string status = "-";
    if (reference) {
      const bool ok =
          std::abs(static_cast<double>(mb.total) - t.macs_target) <= t.macs_tol * t.macs_target;
      status = ok ? "pass" : "FAIL";
      if (!ok) ++failures;
    }
    std::printf("%-10s %14lld %14lld %14.0f %s\n", t.name, static_cast<long long>(mb.total),
                static_cast<long long>(dpt::count_flops(cfg)),
                reference ? t.macs_target : 0.0, status.c_str());
    std::printf("  embed per stage: %lld %lld %lld %lld; blocks per stage: %lld %lld %lld %lld; "
                "head: %lld\n",
                static_cast<long long>(mb.embed[0]), static_cast<long long>(mb.embed[1]),
                static_cast<long long>(mb.embed[2]), static_cast<long long>(mb.embed[3]),
                static_cast<long long>(mb.blocks[0]), static_cast<long long>(mb.blocks[1]),
                static_cast<long long>(mb.blocks[2]), static_cast<long long>(mb.blocks[3]),
                static_cast<long long>(mb.head));
  }
  return failures == 0 ? 0 : 1;
}

struct BenchRow {
  std::string kernel;
  int64_t iters = 0;
  double median_us = 0, p95_us = 0;
};

BenchRow bench_loop(const std::string& name, int64_t iters, const std::function<void()>& fn) {
  // One warm pass, then timed iterations.
  fn();
  std::vector<double> us(static_cast<size_t>(iters));
  for (int64_t i = 0; i < iters; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    us[static_cast<size_t>(i)] = std::chrono::duration<double, std::micro>(t1 - t0).count();
  }
  std::sort(us.begin(), us.end());
  BenchRow row;
  row.kernel = name;
  row.iters = iters;
  row.median_us = us[static_cast<size_t>(iters / 2)];
  row.p95_us = us[static_cast<size_t>((iters - 1) * 95 / 100)];
  return row;
}

int run_bench_cmd(uint64_t seed, const std::string& out_path) {
  using dpt::Tensor;
  dpt::Rng rng(seed);
  const int64_t iters = 31;

  // Interpolation kernels on a 32x32x8 map, 2000 points per iteration.
  const int64_t h = 32, w = 32, c = 8, npts = 2000;
  Tensor map({h, w, c});
  for (int64_t i = 0; i < map.numel(); ++i) map.flat(i) = rng.normal();
  std::vector<double> px(npts), py(npts);
  for (int64_t p = 0; p < npts; ++p) {
    px[static_cast<size_t>(p)] = rng.uniform(-1.0, static_cast<double>(w));
    py[static_cast<size_t>(p)] = rng.uniform(-1.0, static_cast<double>(h));
  }
  std::vector<double> sink(static_cast<size_t>(c));
  volatile double guard = 0;

  std::vector<BenchRow> rows;
  rows.push_back(bench_loop("bilinear_fast", iters, [&]() {
    double acc = 0;
    for (int64_t p = 0; p < npts; ++p) {
      dpt::bilinear_sample(map, px[static_cast<size_t>(p)], py[static_cast<size_t>(p)],
                           sink.data());
      acc += sink[0];
    }
    guard = acc;
  }));
  rows.push_back(bench_loop("bilinear_bruteforce", iters, [&]() {
    double acc = 0;
    for (int64_t p = 0; p < npts; ++p) {
      Tensor out = dpt::bilinear_sample_bruteforce(map, px[static_cast<size_t>(p)],
                                                   py[static_cast<size_t>(p)]);
      acc += out.flat(0);
    }
    guard = acc;
  }));

  // Deformable embedding, second-stage shape of the small preset.
  dpt::PatchGridSpec grid = dpt::PatchGridSpec::make(16, 16, 2);
  dpt::DePatchConfig dcfg;
  dpt::DePatchEmbedT<double> dp("bench", grid, 32, 64, dcfg);
  dp.init_params(dpt::Rng(seed).fork(1), dpt::InitKind::TruncNormal);
  Tensor x({8, 16, 16, 32});
  for (int64_t i = 0; i < x.numel(); ++i) x.flat(i) = rng.normal();
  rows.push_back(bench_loop("depatch_forward", iters, [&]() {
    Tensor y = dp.forward(x);
    guard = y.flat(0);
  }));
  Tensor gy({8, grid.n_patches, 64});
  for (int64_t i = 0; i < gy.numel(); ++i) gy.flat(i) = rng.normal() * 0.01;
  rows.push_back(bench_loop("depatch_forward_backward", iters, [&]() {
    Tensor y = dp.forward(x);
    Tensor dx = dp.backward(gy);
    guard = y.flat(0) + dx.flat(0);
  }));

  // Whole small-preset forward, one image.
  ModelConfig mc = ModelConfig::preset("toy");
  dpt::ModelT<double> model(mc, seed);
  Tensor img({1, mc.input_size, mc.input_size, mc.in_chans});
  for (int64_t i = 0; i < img.numel(); ++i) img.flat(i) = rng.normal();
  rows.push_back(bench_loop("toy_forward", iters, [&]() {
    Tensor logits = model.forward(img);
    guard = logits.flat(0);
  }));
  (void)guard;

  const double speedup = rows[1].median_us / rows[0].median_us;
  const bool ok = speedup > 10.0;
  std::string csv = "kernel,iters,median_us,p95_us\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%lld,%.3f,%.3f\n", r.kernel.c_str(),
                  static_cast<long long>(r.iters), r.median_us, r.p95_us);
    csv += buf;
  }
  std::snprintf(buf, sizeof(buf), "# check,bilinear_speedup=%.1f,ok=%d\n", speedup, ok ? 1 : 0);
  csv += buf;
  std::fputs(csv.c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw dpt::IoError("cannot write " + out_path);
    out << csv;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deformable patch embedding toolkit"};
  app.require_subcommand(1);
  int rc = 0;
  std::function<void()> action;

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  uint64_t gc_seed = 7;
  std::string gc_component, gc_corrupt;
  gc->add_option("--seed", gc_seed, "probe seed");
  gc->add_option("--component", gc_component, "run a single component");
  gc->add_option("--corrupt", gc_corrupt,
                 "deliberately damage this component's gradient (negative control)");
  gc->callback([&]() { rc = run_gradcheck_cmd(gc_seed, gc_component, gc_corrupt); });

  // gen-data
  auto* gd = app.add_subcommand("gen-data", "generate the synthetic shape dataset");
  dpt::SceneSpec scene;
  int64_t gd_train = 4096, gd_val = 1024, gd_size = 64;
  std::string gd_out = "data";
  gd->add_option("--out", gd_out, "output directory");
  gd->add_option("--n-train", gd_train, "train split size");
  gd->add_option("--n-val", gd_val, "val split size");
  gd->add_option("--size", gd_size, "canvas side length");
  gd->add_option("--classes", scene.num_classes, "number of shape classes (<= 8)");
  gd->add_option("--seed", scene.seed, "dataset seed");
  gd->add_option("--translate", scene.translate, "max center shift in pixels");
  gd->add_option("--scale-min", scene.scale_min, "min size factor");
  gd->add_option("--scale-max", scene.scale_max, "max size factor");
  gd->add_option("--rot-max", scene.rot_max, "max rotation in radians");
  gd->add_option("--noise", scene.noise_std, "additive Gaussian noise std");
  gd->callback([&]() {
    scene.height = scene.width = gd_size;
    const auto m = dpt::generate_dataset(scene, gd_train, gd_val, gd_out);
    std::printf("wrote %lld train / %lld val samples (%lldx%lld, %d classes) to %s\n",
                static_cast<long long>(m.n_train), static_cast<long long>(m.n_val),
                static_cast<long long>(m.spec.height), static_cast<long long>(m.spec.width),
                m.spec.num_classes, m.root.c_str());
    std::printf("mean=[%.6f %.6f %.6f] std=[%.6f %.6f %.6f]\n", m.mean[0], m.mean[1], m.mean[2],
                m.stdev[0], m.stdev[1], m.stdev[2]);
  });

  // train
  auto* tr = app.add_subcommand("train", "train a model on the synthetic dataset");
  ConfigArgs tr_args;
  std::string tr_data, tr_out;
  add_config_options(tr, tr_args);
  tr->add_option("--data", tr_data, "dataset directory (overrides config)");
  tr->add_option("--out", tr_out, "output directory (overrides config)");
  tr->callback([&]() {
    if (!tr_data.empty()) tr_args.overrides.push_back("data_dir=" + tr_data);
    if (!tr_out.empty()) tr_args.overrides.push_back("out_dir=" + tr_out);
    const dpt::RunConfig cfg = tr_args.resolve();
    const dpt::TrainResult res = dpt::train_run(cfg);
    std::printf("epoch,train_loss,val_acc\n");
    for (const auto& row : res.rows)
      std::printf("%lld,%.6f,%.6f\n", static_cast<long long>(row.epoch), row.train_loss,
                  row.val_acc);
    std::printf("best: epoch %lld acc %.6f; final acc %.6f\n",
                static_cast<long long>(res.best_epoch), res.best_val_acc, res.final_val_acc);
    std::printf("metrics: %s\n", res.metrics_path.c_str());
    std::printf("checkpoints: %s %s\n", res.best_dir.c_str(), res.final_dir.c_str());
  });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_data, ev_split = "val";
  int64_t ev_batch = 128;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint directory")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train or val");
  ev->add_option("--batch", ev_batch, "evaluation batch size");
  ev->callback([&]() {
    const dpt::EvalReport rep = dpt::eval_checkpoint(ev_ckpt, ev_data, ev_split, ev_batch);
    std::printf("split=%s n=%lld loss=%.17g acc=%.17g\n", ev_split.c_str(),
                static_cast<long long>(rep.n), rep.loss, rep.acc);
    for (const auto& g : rep.geo)
      std::printf("stage%lld sw=%.17g+-%.17g sh=%.17g+-%.17g |delta|=%.17g+-%.17g\n",
                  static_cast<long long>(g.stage), g.sw_mean, g.sw_std, g.sh_mean, g.sh_std,
                  g.od_mean, g.od_std);
  });

  // params / flops
  auto* pa = app.add_subcommand("params", "parameter accounting vs reference targets");
  std::string pa_preset = "pvt-tiny";
  pa->add_option("--preset", pa_preset, "pvt-tiny or toy");
  pa->callback([&]() { rc = run_params_cmd(pa_preset); });

  auto* fl = app.add_subcommand("flops", "multiply-accumulate accounting vs reference targets");
  std::string fl_preset = "pvt-tiny";
  fl->add_option("--preset", fl_preset, "pvt-tiny or toy");
  fl->callback([&]() { rc = run_flops_cmd(fl_preset); });

  // visualize
  auto* vz = app.add_subcommand("visualize", "export patch-geometry overlay SVG + CSV");
  dpt::VizRequest vreq;
  vz->add_option("--checkpoint", vreq.checkpoint_dir, "checkpoint directory")->required();
  vz->add_option("--input", vreq.image_path, "input image (.ppm or stored tensor)")->required();
  vz->add_option("--index", vreq.image_index, "sample index for [N,H,W,C] tensors");
  vz->add_option("--stage", vreq.stage, "stage to visualize (1-4)");
  vz->add_option("--subsample", vreq.subsample, "draw every m-th patch");
  vz->add_option("--stats-data", vreq.stats_data,
                 "dataset directory: append val-split geometry statistics to the CSV");
  vz->add_option("--out", vreq.out_prefix, "output path prefix")->required();
  vz->callback([&]() {
    const dpt::VizResult res = dpt::run_visualize(vreq);
    std::printf("wrote %s\nwrote %s\nwrote %s\n", res.svg_path.c_str(), res.csv_path.c_str(),
                res.hist_path.c_str());
  });

  // bench
  auto* be = app.add_subcommand("bench", "kernel latency report (CSV)");
  uint64_t be_seed = 7;
  std::string be_out;
  be->add_option("--seed", be_seed, "input seed");
  be->add_option("--out", be_out, "also write the CSV here");
  be->callback([&]() { rc = run_bench_cmd(be_seed, be_out); });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const dpt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return rc;
}
