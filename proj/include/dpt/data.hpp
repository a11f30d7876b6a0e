#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dpt/rng.hpp"
#include "dpt/tensor.hpp"

namespace dpt {

// Canonical shape-family names, in label order.
inline constexpr std::array<const char*, 8> kShapeNames = {
    "circle", "square", "triangle", "cross", "ring", "bar", "lshape", "dotpair"};

// Synthetic scene description.  Each sample draws one shape whose class is
// `index % num_classes`; position, size and orientation are randomized per
// sample within the given ranges, rejection-sampled so the shape stays fully
// inside the canvas.  Pixels hold foreground/background colors mixed by
// 4x4-supersampled coverage, plus Gaussian noise, clamped to [0,1].
struct SceneSpec {
  int64_t height = 64;
  int64_t width = 64;
  int64_t channels = 3;
  int num_classes = 8;
  double translate = 7.0;  // max |center shift| per axis, pixels
  double scale_min = 0.55;
  double scale_max = 1.35;
  double rot_max = 6.283185307179586476925287;  // rotation ~ U[0, rot_max)
  double noise_std = 0.02;
  uint64_t seed = 42;

  void validate() const;
  double base_radius() const;  // canonical shape radius in pixels
};

struct DatasetManifest {
  SceneSpec spec;
  int64_t n_train = 0;
  int64_t n_val = 0;
  std::vector<std::string> class_names;
  std::vector<double> mean;   // per-channel mean of the train split, in [0,1]
  std::vector<double> stdev;  // per-channel std of the train split
  std::string root;           // directory containing manifest.json
};

// True if canonical point (u, v) lies inside shape family `cls`.
bool shape_inside(int cls, double u, double v);

// Renders one sample deterministically from (spec.seed, index); the train
// split uses indices [0, n_train) and the val split [n_train, n_train+n_val).
// Returns an [H, W, C] image in [0,1]; writes the label if requested.
TensorT<double> render_sample(const SceneSpec& spec, int64_t index, int* label_out = nullptr);

// Writes train/ and val/ image+label tensors plus manifest.json under
// out_dir and returns the manifest.  Labels are stored as a float tensor of
// integral values in [0, num_classes).
DatasetManifest generate_dataset(const SceneSpec& spec, int64_t n_train, int64_t n_val,
                                 const std::string& out_dir);

// Reads manifest.json (path may name the file or its directory).
DatasetManifest load_manifest(const std::string& path);

template <class T>
struct SplitT {
  TensorT<T> images;  // [N, H, W, C]
  std::vector<int32_t> labels;
  int num_classes = 0;
};

// Loads a split ("train" or "val"); when `normalize` is set, applies the
// per-channel (x - mean) / std transform recorded in the manifest.
template <class T>
SplitT<T> load_split(const DatasetManifest& m, const std::string& split, bool normalize = true);

template <class T>
struct BatchT {
  TensorT<T> images;  // [b, H, W, C]
  std::vector<int32_t> labels;
};

// Deterministic mini-batch iterator.  The epoch-e order is a Fisher-Yates
// shuffle driven by Rng(shuffle_seed).fork(e); without shuffling the order is
// the identity.  Every epoch covers each sample exactly once, the final batch
// being short when batch_size does not divide N.
template <class T>
class BatchLoaderT {
 public:
  BatchLoaderT(const SplitT<T>* split, int64_t batch_size, uint64_t shuffle_seed, bool shuffle);

  int64_t size() const { return n_; }
  int64_t num_batches() const;
  void begin_epoch(int64_t epoch);
  BatchT<T> batch(int64_t index) const;

  // Reference permutation: identity 0..n-1 shuffled by Fisher-Yates with
  // j = r.uniform_int(i + 1) for i = n-1 .. 1, r = Rng(seed).fork(epoch).
  static std::vector<int64_t> epoch_permutation(int64_t n, uint64_t seed, int64_t epoch);

 private:
  const SplitT<T>* split_;
  int64_t n_, batch_;
  uint64_t seed_;
  bool shuffle_;
  std::vector<int64_t> order_;
};

using BatchLoader = BatchLoaderT<double>;

}  // namespace dpt
