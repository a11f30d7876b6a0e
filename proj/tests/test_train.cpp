#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dpt/data.hpp"
#include "dpt/optim.hpp"
#include "dpt/runconfig.hpp"
#include "dpt/train.hpp"

namespace fs = std::filesystem;
using dpt::AdamWT;
using dpt::CosineSchedule;
using dpt::ParamT;
using dpt::RunConfig;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A few-second training setup: 16x16 canvas, 4 classes, narrow model.
RunConfig micro_config(const std::string& data_dir, const std::string& out_dir) {
  std::vector<std::string> ov = {
      "epochs=2",
      "batch_size=8",
      "lr=0.004",
      "warmup_frac=0.1",
      "data_dir=" + data_dir,
      "out_dir=" + out_dir,
      "model.input_size=16",
      "model.num_classes=4",
      "model.k=2",
      "model.stages.0.dim=8",   "model.stages.0.heads=1", "model.stages.0.patch=2",
      "model.stages.0.sr_ratio=2",
      "model.stages.1.dim=8",   "model.stages.1.heads=1", "model.stages.1.patch=2",
      "model.stages.1.sr_ratio=2",
      "model.stages.2.dim=8",   "model.stages.2.heads=1", "model.stages.2.patch=2",
      "model.stages.2.sr_ratio=1",
      "model.stages.3.dim=8",   "model.stages.3.heads=1", "model.stages.3.patch=2",
      "model.stages.3.sr_ratio=1",
  };
  return dpt::load_run_config("", ov);
}

void ensure_micro_dataset(const std::string& dir) {
  if (fs::exists(fs::path(dir) / "manifest.json")) return;
  dpt::SceneSpec spec;
  spec.height = spec.width = 16;
  spec.num_classes = 4;
  spec.translate = 1.5;
  spec.seed = 1234;
  dpt::generate_dataset(spec, 32, 16, dir);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("cosine schedule: warmup, peak, decay tail") {
  CosineSchedule s;
  s.base_lr = 0.1;
  s.min_lr = 0.001;
  s.warmup_steps = 10;
  s.total_steps = 110;
  CHECK(s.lr_at(1) == doctest::Approx(0.01));
  CHECK(s.lr_at(5) == doctest::Approx(0.05));
  CHECK(s.lr_at(10) == doctest::Approx(0.1));
  // Midpoint of the cosine leg: halfway between base and min.
  CHECK(s.lr_at(60) == doctest::Approx(0.5 * (0.1 + 0.001)).epsilon(1e-9));
  CHECK(s.lr_at(110) == doctest::Approx(0.001).epsilon(1e-9));
  for (int64_t t = 2; t <= 10; ++t) CHECK(s.lr_at(t) > s.lr_at(t - 1));   // warmup rises
  for (int64_t t = 12; t <= 110; ++t) CHECK(s.lr_at(t) < s.lr_at(t - 1));  // cosine falls
  CHECK_THROWS_AS(s.lr_at(0), dpt::ArgumentError);
}

TEST_CASE("adamw step against a longhand update") {
  ParamT<double> w, nb;
  w.init_shape("w", {2}, /*wd=*/true);
  nb.init_shape("nb", {1}, /*wd=*/false);
  w.value.flat(0) = 1.0;
  w.value.flat(1) = -2.0;
  nb.value.flat(0) = 0.5;
  w.grad.flat(0) = 0.3;
  w.grad.flat(1) = -0.7;
  nb.grad.flat(0) = 0.1;

  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.05;
  AdamWT<double> opt({&w, &nb}, b1, b2, eps, wd);
  opt.step(lr);
  CHECK(opt.t() == 1);

  auto expect = [&](double theta, double g, bool decay) {
    double m = (1 - b1) * g;
    double v = (1 - b2) * g * g;
    double mh = m / (1 - b1);
    double vh = v / (1 - b2);
    return theta - lr * (mh / (std::sqrt(vh) + eps) + (decay ? wd * theta : 0.0));
  };
  CHECK(w.value.flat(0) == doctest::Approx(expect(1.0, 0.3, true)).epsilon(1e-12));
  CHECK(w.value.flat(1) == doctest::Approx(expect(-2.0, -0.7, true)).epsilon(1e-12));
  CHECK(nb.value.flat(0) == doctest::Approx(expect(0.5, 0.1, false)).epsilon(1e-12));

  // Second step uses the running moments.
  double m0 = (1 - b1) * 0.3, v0 = (1 - b2) * 0.09;
  double th0 = w.value.flat(0);
  w.grad.flat(0) = -0.2;
  w.grad.flat(1) = 0.0;
  nb.grad.flat(0) = 0.0;
  opt.step(lr);
  double m1 = b1 * m0 + (1 - b1) * (-0.2);
  double v1 = b2 * v0 + (1 - b2) * 0.04;
  double mh = m1 / (1 - b1 * b1), vh = v1 / (1 - b2 * b2);
  CHECK(w.value.flat(0) ==
        doctest::Approx(th0 - lr * (mh / (std::sqrt(vh) + eps) + wd * th0)).epsilon(1e-12));

  opt.zero_grad();
  CHECK(w.grad.flat(0) == 0.0);
  CHECK(nb.grad.flat(0) == 0.0);
}

TEST_CASE("config overrides, echo and hash") {
  RunConfig cfg = dpt::load_run_config(
      "", {"seed=9", "model.k=4", "model.stages.2.depth=3", "dtype=f64", "lr=0.002"});
  CHECK(cfg.seed == 9);
  CHECK(cfg.model.k == 4);
  CHECK(cfg.model.stages[2].depth == 3);
  CHECK(cfg.dtype == "f64");
  CHECK(cfg.lr == 0.002);
  CHECK(cfg.effective_lr() == doctest::Approx(0.002 * 128 / 1024.0));

  RunConfig same = dpt::load_run_config(
      "", {"seed=9", "model.k=4", "model.stages.2.depth=3", "dtype=f64", "lr=0.002"});
  CHECK(dpt::config_hash_hex(cfg) == dpt::config_hash_hex(same));
  RunConfig other = cfg;
  other.seed = 10;
  CHECK(dpt::config_hash_hex(cfg) != dpt::config_hash_hex(other));

  CHECK_THROWS_AS(dpt::load_run_config("", {"epochs=0"}), dpt::ConfigError);
  CHECK_THROWS_AS(dpt::load_run_config("", {"dtype=f16"}), dpt::ConfigError);
  CHECK_THROWS_AS(dpt::load_run_config("", {"nonsense"}), dpt::ArgumentError);
  CHECK_THROWS_AS(dpt::load_run_config("missing_config.json", {}), dpt::IoError);
}

TEST_CASE("config file merging") {
  fs::create_directories("train_scratch");
  const std::string path = "train_scratch/cfg.json";
  {
    std::ofstream out(path);
    out << R"({"preset": "toy", "epochs": 3, "model": {"k": 2}, "lr": 0.01})";
  }
  RunConfig cfg = dpt::load_run_config(path, {"batch_size=16"});
  CHECK(cfg.epochs == 3);
  CHECK(cfg.model.k == 2);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.model.stages[0].dim == dpt::ModelConfig::preset("toy").stages[0].dim);
}

TEST_CASE("a short run trains, logs and reproduces byte-identically") {
  const std::string data_dir = "train_scratch/micro_data";
  ensure_micro_dataset(data_dir);
  RunConfig cfg = micro_config(data_dir, "train_scratch/run_a");

  dpt::TrainResult res = dpt::train_run(cfg);
  REQUIRE(res.rows.size() == 3);  // init row + 2 epochs
  CHECK(std::isnan(res.rows[0].train_loss));
  CHECK(res.rows[1].lr > 0);
  for (const auto& row : res.rows) {
    CHECK(std::isfinite(row.val_loss));
    CHECK(row.val_acc >= 0.0);
    CHECK(row.val_acc <= 1.0);
    REQUIRE(row.geo.size() == cfg.model.depatch_stages.size());
    for (const auto& g : row.geo) CHECK(g.sw_mean > 0);
  }
  CHECK(fs::exists(res.metrics_path));
  CHECK(fs::exists(res.timing_path));
  CHECK(fs::exists(fs::path(res.best_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(res.final_dir) / "manifest.json"));
  CHECK(fs::exists(fs::path(res.out_dir) / "config.json"));

  // Geometry starts at the identity: the init row reports the patch size.
  CHECK(res.rows[0].geo[0].sw_mean == 2.0);
  CHECK(res.rows[0].geo[0].od_mean == 0.0);

  // The metrics log carries no wall-clock text, so a rerun into the same
  // directory must reproduce it byte for byte.
  std::string first = slurp(res.metrics_path);
  dpt::TrainResult res2 = dpt::train_run(cfg);
  CHECK(first == slurp(res2.metrics_path));
  CHECK(res2.final_val_acc == res.final_val_acc);

  // Evaluating the stored final checkpoint reproduces the logged row.
  dpt::EvalReport ev = dpt::eval_checkpoint(res.final_dir, data_dir, "val", 8);
  CHECK(ev.acc == res.rows.back().val_acc);
  CHECK(ev.loss == res.rows.back().val_loss);
  REQUIRE(ev.geo.size() == res.rows.back().geo.size());
  CHECK(ev.geo[0].sw_mean == res.rows.back().geo[0].sw_mean);
  CHECK(ev.geo[0].od_std == res.rows.back().geo[0].od_std);

  dpt::EvalReport tr = dpt::eval_checkpoint(res.final_dir, data_dir, "train", 8);
  CHECK(tr.n == 32);

  // The checkpoint records its training precision.
  CHECK(dpt::checkpoint_dtype(res.final_dir) == "f32");
}

TEST_CASE("config mismatches are rejected up front") {
  const std::string data_dir = "train_scratch/micro_data";
  ensure_micro_dataset(data_dir);
  RunConfig cfg = micro_config(data_dir, "train_scratch/run_bad");
  cfg.model.num_classes = 7;  // dataset has 4
  CHECK_THROWS_AS(dpt::train_run(cfg), dpt::ConfigError);
  RunConfig cfg2 = micro_config(data_dir, "train_scratch/run_bad2");
  cfg2.model.input_size = 32;  // dataset canvas is 16
  CHECK_THROWS_AS(dpt::train_run(cfg2), dpt::ConfigError);
  RunConfig cfg3 = micro_config(data_dir, "train_scratch/run_bad3");
  cfg3.dtype = "f64";
  cfg3.epochs = 1;
  dpt::TrainResult res = dpt::train_run(cfg3);  // the wide path works too
  CHECK(dpt::checkpoint_dtype(res.final_dir) == "f64");
}

}  // TEST_SUITE
