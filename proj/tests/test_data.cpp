#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "dpt/data.hpp"

namespace fs = std::filesystem;
using dpt::BatchLoaderT;
using dpt::DatasetManifest;
using dpt::Rng;
using dpt::SceneSpec;
using dpt::Tensor;

namespace {

SceneSpec small_spec() {
  SceneSpec s;
  s.height = s.width = 32;
  s.num_classes = 8;
  s.translate = 3.0;
  s.seed = 900;
  return s;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("canonical shape predicates") {
  // Center membership differs per family: solid shapes contain it, the ring
  // and the dot pair do not.
  for (int cls : {0, 1, 2, 3, 5, 6}) {
    INFO("class " << cls);
    bool center = dpt::shape_inside(cls, cls == 6 ? -0.44 : 0.0, 0.0);
    CHECK(center);
  }
  CHECK(!dpt::shape_inside(4, 0.0, 0.0));  // ring hole
  CHECK(dpt::shape_inside(4, 0.7, 0.0));
  CHECK(!dpt::shape_inside(7, 0.0, 0.0));  // gap between the dots
  CHECK(dpt::shape_inside(7, 0.55, 0.0));
  // Everything lives inside the unit disk.
  Rng r(71);
  for (int cls = 0; cls < 8; ++cls)
    for (int i = 0; i < 200; ++i) {
      double u = r.uniform(-2.0, 2.0), v = r.uniform(-2.0, 2.0);
      if (u * u + v * v > 1.0) CHECK(!dpt::shape_inside(cls, u, v));
    }
  CHECK_THROWS_AS(dpt::shape_inside(8, 0, 0), dpt::ArgumentError);
}

TEST_CASE("rendering is deterministic and labeled by index") {
  SceneSpec spec = small_spec();
  int label = -1;
  Tensor a = dpt::render_sample(spec, 11, &label);
  CHECK(label == 11 % spec.num_classes);
  Tensor b = dpt::render_sample(spec, 11);
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a.flat(i) == b.flat(i));
  Tensor c = dpt::render_sample(spec, 12);
  bool differs = false;
  for (int64_t i = 0; i < a.numel(); ++i) differs |= a.flat(i) != c.flat(i);
  CHECK(differs);
  for (int64_t i = 0; i < a.numel(); ++i) {
    REQUIRE(a.flat(i) >= 0.0);
    REQUIRE(a.flat(i) <= 1.0);
  }
}

TEST_CASE("additive noise has the configured strength") {
  SceneSpec noisy = small_spec();
  noisy.translate = 0.0;
  noisy.scale_min = noisy.scale_max = 1.0;
  noisy.rot_max = 0.0;
  SceneSpec clean = noisy;
  clean.noise_std = 0.0;

  double s = 0, ss = 0;
  int64_t n = 0;
  for (int64_t idx = 0; idx < 12; ++idx) {
    Tensor with = dpt::render_sample(noisy, idx);
    Tensor without = dpt::render_sample(clean, idx);
    for (int64_t i = 0; i < with.numel(); ++i) {
      // Skip the rare clamped pixels; elsewhere the difference is the noise.
      if (without.flat(i) <= 0.05 || without.flat(i) >= 0.95) continue;
      double d = with.flat(i) - without.flat(i);
      s += d;
      ss += d * d;
      ++n;
    }
  }
  double mean = s / n;
  double std = std::sqrt(ss / n - mean * mean);
  CHECK(std == doctest::Approx(noisy.noise_std).epsilon(0.2));
  CHECK(std::fabs(mean) < 0.001);
}

TEST_CASE("shapes carry their transforms") {
  // With a fixed placement the same index renders the same class; across
  // classes the clean images differ (the families are distinguishable).
  SceneSpec spec = small_spec();
  spec.noise_std = 0.0;
  for (int c1 = 0; c1 < 7; ++c1) {
    Tensor a = dpt::render_sample(spec, c1);
    Tensor b = dpt::render_sample(spec, c1 + 1);
    double diff = 0;
    for (int64_t i = 0; i < a.numel(); ++i) diff += std::fabs(a.flat(i) - b.flat(i));
    CHECK(diff > 1.0);
  }
}

TEST_CASE("impossible transform ranges are rejected") {
  SceneSpec spec = small_spec();
  // Base radius is a quarter canvas; doubling it cannot fit any placement.
  spec.scale_min = spec.scale_max = 2.0;
  CHECK_THROWS_AS(dpt::render_sample(spec, 0), dpt::ConfigError);
  SceneSpec bad = small_spec();
  bad.num_classes = 9;
  CHECK_THROWS_AS(bad.validate(), dpt::ConfigError);
}

TEST_CASE("dataset generation, manifest and split loading") {
  SceneSpec spec = small_spec();
  const std::string dir = "data_scratch/set_a";
  fs::remove_all(dir);
  DatasetManifest m = dpt::generate_dataset(spec, 48, 16, dir);
  CHECK(m.n_train == 48);
  CHECK(m.n_val == 16);
  REQUIRE(m.mean.size() == 3);
  REQUIRE(m.stdev.size() == 3);
  CHECK(m.class_names.size() == 8);
  CHECK(m.class_names[0] == "circle");
  CHECK(fs::exists(fs::path(dir) / "train/images.dpt"));
  CHECK(fs::exists(fs::path(dir) / "val/labels.dpt"));

  DatasetManifest re = dpt::load_manifest(dir);
  CHECK(re.n_train == m.n_train);
  CHECK(re.spec.seed == spec.seed);
  for (int c = 0; c < 3; ++c) CHECK(re.mean[static_cast<size_t>(c)] == m.mean[static_cast<size_t>(c)]);

  auto train = dpt::load_split<double>(re, "train");
  REQUIRE(train.images.shape() == dpt::Shape{48, 32, 32, 3});
  REQUIRE(train.labels.size() == 48);
  for (int64_t i = 0; i < 48; ++i) CHECK(train.labels[static_cast<size_t>(i)] == i % 8);
  auto val = dpt::load_split<double>(re, "val");
  for (int64_t i = 0; i < 16; ++i) CHECK(val.labels[static_cast<size_t>(i)] == (48 + i) % 8);

  // Normalization leaves the train split with zero mean and unit variance.
  for (int64_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    int64_t n = 0;
    for (int64_t i = 0; i < train.images.numel(); i += 3) {
      double v = train.images.flat(i + c);
      s += v;
      ss += v * v;
      ++n;
    }
    double mean = s / n;
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(ss / n - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
  }

  // Raw loading reproduces the renderer's pixels (through the f32 store).
  auto raw = dpt::load_split<double>(re, "val", /*normalize=*/false);
  Tensor sample17 = dpt::render_sample(spec, 48 + 1);
  for (int64_t i = 0; i < 32 * 32 * 3; ++i)
    CHECK(raw.images.flat(1 * 32 * 32 * 3 + i) ==
          static_cast<double>(static_cast<float>(sample17.flat(i))));

  CHECK_THROWS_AS(dpt::load_split<double>(re, "test"), dpt::ArgumentError);
  CHECK_THROWS_AS(dpt::load_manifest("data_scratch/nonexistent"), dpt::IoError);
}

TEST_CASE("epoch permutation follows the documented shuffle") {
  const int64_t n = 23;
  const uint64_t seed = 77;
  for (int64_t epoch : {0, 1, 5}) {
    auto perm = dpt::BatchLoaderT<double>::epoch_permutation(n, seed, epoch);
    // Independent rebuild of the same Fisher-Yates walk.
    std::vector<int64_t> ref(static_cast<size_t>(n));
    std::iota(ref.begin(), ref.end(), 0);
    Rng r = Rng(seed).fork(static_cast<uint64_t>(epoch));
    for (int64_t i = n - 1; i >= 1; --i)
      std::swap(ref[static_cast<size_t>(i)], ref[static_cast<size_t>(r.uniform_int(i + 1))]);
    CHECK(perm == ref);
    auto sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (int64_t i = 0; i < n; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);
  }
  CHECK(dpt::BatchLoaderT<double>::epoch_permutation(n, seed, 1) !=
        dpt::BatchLoaderT<double>::epoch_permutation(n, seed, 2));
}

TEST_CASE("batch loader covers every sample with a short tail") {
  SceneSpec spec = small_spec();
  const std::string dir = "data_scratch/set_b";
  fs::remove_all(dir);
  dpt::generate_dataset(spec, 21, 8, dir);
  auto m = dpt::load_manifest(dir);
  auto split = dpt::load_split<double>(m, "train");

  BatchLoaderT<double> loader(&split, 8, 5, /*shuffle=*/true);
  CHECK(loader.size() == 21);
  CHECK(loader.num_batches() == 3);
  loader.begin_epoch(1);
  std::vector<int32_t> seen;
  for (int64_t b = 0; b < loader.num_batches(); ++b) {
    auto batch = loader.batch(b);
    CHECK(batch.images.extent(0) == (b == 2 ? 5 : 8));
    for (int32_t l : batch.labels) seen.push_back(l);
  }
  REQUIRE(seen.size() == 21);
  std::vector<int> count_per_class(8, 0);
  for (int32_t l : seen) count_per_class[static_cast<size_t>(l)]++;
  // 21 samples labeled round-robin: classes 0..4 thrice, 5..7 twice.
  for (int c = 0; c < 8; ++c) CHECK(count_per_class[static_cast<size_t>(c)] == (c < 5 ? 3 : 2));

  // Without shuffling the loader walks the split in storage order.
  BatchLoaderT<double> plain(&split, 8, 5, /*shuffle=*/false);
  plain.begin_epoch(4);
  auto b0 = plain.batch(0);
  for (int64_t i = 0; i < 8; ++i) {
    CHECK(b0.labels[static_cast<size_t>(i)] == split.labels[static_cast<size_t>(i)]);
    for (int64_t t = 0; t < 32 * 32 * 3; ++t)
      REQUIRE(b0.images.flat(i * 32 * 32 * 3 + t) == split.images.flat(i * 32 * 32 * 3 + t));
  }

  // Shuffled epochs differ from each other but agree across loaders.
  BatchLoaderT<double> twin(&split, 8, 5, /*shuffle=*/true);
  loader.begin_epoch(2);
  twin.begin_epoch(2);
  auto x = loader.batch(0), y = twin.batch(0);
  for (size_t i = 0; i < x.labels.size(); ++i) CHECK(x.labels[i] == y.labels[i]);
}

}  // TEST_SUITE
