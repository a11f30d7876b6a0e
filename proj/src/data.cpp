#include "dpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dpt/errors.hpp"
#include "dpt/io.hpp"

namespace dpt {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("scene: canvas must be at least 8x8");
  if (channels != 3) throw ConfigError("scene: channels must be 3");
  if (num_classes < 1 || num_classes > 8)
    throw ConfigError("scene: num_classes must be in [1, 8]");
  if (translate < 0.0) throw ConfigError("scene: translate must be >= 0");
  if (!(scale_min > 0.0) || scale_max < scale_min)
    throw ConfigError("scene: need 0 < scale_min <= scale_max");
  if (rot_max < 0.0) throw ConfigError("scene: rot_max must be >= 0");
  if (noise_std < 0.0) throw ConfigError("scene: noise_std must be >= 0");
}

double SceneSpec::base_radius() const {
  return static_cast<double>(std::min(height, width)) / 4.0;
}

namespace {

constexpr double kFg[3] = {0.9, 0.8, 0.7};
constexpr double kBg[3] = {0.1, 0.12, 0.14};

// All shapes live inside the unit disk of canonical (u, v) coordinates.
double edge_side(double ax, double ay, double bx, double by, double qx, double qy) {
  return (bx - ax) * (qy - ay) - (by - ay) * (qx - ax);
}

}  // namespace

bool shape_inside(int cls, double u, double v) {
  const double r2 = u * u + v * v;
  switch (cls) {
    case 0:  // circle
      return r2 <= 0.81;
    case 1:  // square
      return std::abs(u) <= 0.68 && std::abs(v) <= 0.68;
    case 2: {  // triangle, vertices on a radius-0.95 circle
      const double p0x = 0.0, p0y = 0.95;
      const double p1x = -0.8227241335952167, p1y = -0.475;
      const double p2x = 0.8227241335952167, p2y = -0.475;
      return edge_side(p0x, p0y, p1x, p1y, u, v) >= 0.0 &&
             edge_side(p1x, p1y, p2x, p2y, u, v) >= 0.0 &&
             edge_side(p2x, p2y, p0x, p0y, u, v) >= 0.0;
    }
    case 3:  // cross
      return (std::abs(u) <= 0.28 && std::abs(v) <= 0.9) ||
             (std::abs(v) <= 0.28 && std::abs(u) <= 0.9);
    case 4:  // ring
      return r2 >= 0.3025 && r2 <= 0.81;
    case 5:  // bar
      return std::abs(u) <= 0.9 && std::abs(v) <= 0.22;
    case 6:  // L-shape: vertical stroke plus bottom bar
      return (u >= -0.66 && u <= -0.22 && v >= -0.72 && v <= 0.72) ||
             (u >= -0.66 && u <= 0.66 && v >= 0.28 && v <= 0.72);
    case 7: {  // dot pair
      const double a = (u - 0.55) * (u - 0.55) + v * v;
      const double b = (u + 0.55) * (u + 0.55) + v * v;
      return a <= 0.09 || b <= 0.09;
    }
    default:
      throw ArgumentError("shape class out of range");
  }
}

TensorT<double> render_sample(const SceneSpec& spec, int64_t index, int* label_out) {
  spec.validate();
  if (index < 0) throw ArgumentError("sample index must be >= 0");
  const int64_t h = spec.height, w = spec.width;
  const int cls = static_cast<int>(index % spec.num_classes);
  if (label_out) *label_out = cls;

  Rng rng = Rng(spec.seed).fork(static_cast<uint64_t>(index));
  const double radius = spec.base_radius();
  const double cx0 = static_cast<double>(w - 1) / 2.0;
  const double cy0 = static_cast<double>(h - 1) / 2.0;

  // Rejection-sample a placement whose unit-disk support stays in-canvas.
  double cx = cx0, cy = cy0, sigma = 1.0, theta = 0.0;
  bool placed = false;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double tx = rng.uniform(-spec.translate, spec.translate);
    const double ty = rng.uniform(-spec.translate, spec.translate);
    sigma = rng.uniform(spec.scale_min, spec.scale_max);
    theta = rng.uniform(0.0, spec.rot_max);
    cx = cx0 + tx;
    cy = cy0 + ty;
    const double sup = sigma * radius;
    if (cx - sup >= 0.0 && cx + sup <= static_cast<double>(w - 1) && cy - sup >= 0.0 &&
        cy + sup <= static_cast<double>(h - 1)) {
      placed = true;
      break;
    }
  }
  if (!placed)
    throw ConfigError("scene: transform ranges leave no in-canvas placement for the shape");

  const double ct = std::cos(theta), st = std::sin(theta);
  const double inv = 1.0 / (sigma * radius);

  TensorT<double> img({h, w, spec.channels});
  double* out = img.data();
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      int hits = 0;
      for (int a = 0; a < 4; ++a) {
        const double py = static_cast<double>(i) + (static_cast<double>(a) + 0.5) / 4.0 - 0.5;
        const double dy = py - cy;
        for (int b = 0; b < 4; ++b) {
          const double px = static_cast<double>(j) + (static_cast<double>(b) + 0.5) / 4.0 - 0.5;
          const double dx = px - cx;
          // Inverse rotation maps canvas offsets to canonical coordinates.
          const double u = (ct * dx + st * dy) * inv;
          const double v = (-st * dx + ct * dy) * inv;
          hits += shape_inside(cls, u, v) ? 1 : 0;
        }
      }
      const double alpha = static_cast<double>(hits) / 16.0;
      double* px = out + (i * w + j) * spec.channels;
      for (int64_t c = 0; c < spec.channels; ++c)
        px[c] = kBg[c] + alpha * (kFg[c] - kBg[c]);
    }
  }
  if (spec.noise_std > 0.0) {
    const int64_t n = img.numel();
    for (int64_t t = 0; t < n; ++t) out[t] += spec.noise_std * rng.normal();
  }
  for (int64_t t = 0; t < img.numel(); ++t) out[t] = std::clamp(out[t], 0.0, 1.0);
  return img;
}

namespace {

void write_split(const SceneSpec& spec, int64_t first, int64_t count, const fs::path& dir,
                 double* mean_acc, double* sq_acc) {
  TensorT<float> images({count, spec.height, spec.width, spec.channels});
  TensorT<float> labels({count});
  const int64_t per = spec.height * spec.width * spec.channels;
  for (int64_t s = 0; s < count; ++s) {
    int label = 0;
    TensorT<double> img = render_sample(spec, first + s, &label);
    float* dst = images.data() + s * per;
    const double* src = img.data();
    for (int64_t t = 0; t < per; ++t) dst[t] = static_cast<float>(src[t]);
    labels.flat(s) = static_cast<float>(label);
    if (mean_acc) {
      for (int64_t t = 0; t < per; ++t) {
        const double v = static_cast<double>(dst[t]);
        const int64_t c = t % spec.channels;
        mean_acc[c] += v;
        sq_acc[c] += v * v;
      }
    }
  }
  write_tensor((dir / "images.dpt").string(), images);
  write_tensor((dir / "labels.dpt").string(), labels);
}

json spec_to_json(const SceneSpec& s) {
  return json{{"height", s.height},       {"width", s.width},
              {"channels", s.channels},   {"num_classes", s.num_classes},
              {"translate", s.translate}, {"scale_min", s.scale_min},
              {"scale_max", s.scale_max}, {"rot_max", s.rot_max},
              {"noise_std", s.noise_std}, {"seed", s.seed}};
}

SceneSpec spec_from_json(const json& j) {
  SceneSpec s;
  s.height = j.at("height").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.channels = j.at("channels").get<int64_t>();
  s.num_classes = j.at("num_classes").get<int>();
  s.translate = j.at("translate").get<double>();
  s.scale_min = j.at("scale_min").get<double>();
  s.scale_max = j.at("scale_max").get<double>();
  s.rot_max = j.at("rot_max").get<double>();
  s.noise_std = j.at("noise_std").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  return s;
}

}  // namespace

DatasetManifest generate_dataset(const SceneSpec& spec, int64_t n_train, int64_t n_val,
                                 const std::string& out_dir) {
  spec.validate();
  if (n_train <= 0 || n_val <= 0) throw ArgumentError("dataset: split sizes must be > 0");
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "train", ec);
  if (!ec) fs::create_directories(root / "val", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir + ": " + ec.message());

  std::vector<double> mean(static_cast<size_t>(spec.channels), 0.0);
  std::vector<double> sq(static_cast<size_t>(spec.channels), 0.0);
  write_split(spec, 0, n_train, root / "train", mean.data(), sq.data());
  write_split(spec, n_train, n_val, root / "val", nullptr, nullptr);

  const double denom = static_cast<double>(n_train * spec.height * spec.width);
  DatasetManifest m;
  m.spec = spec;
  m.n_train = n_train;
  m.n_val = n_val;
  m.root = root.string();
  for (int c = 0; c < spec.num_classes; ++c) m.class_names.emplace_back(kShapeNames[c]);
  for (int64_t c = 0; c < spec.channels; ++c) {
    const double mu = mean[c] / denom;
    const double var = sq[c] / denom - mu * mu;
    m.mean.push_back(mu);
    m.stdev.push_back(std::sqrt(std::max(var, 1e-16)));
  }

  json j{{"format", "dpt-dataset-v1"},
         {"spec", spec_to_json(spec)},
         {"n_train", n_train},
         {"n_val", n_val},
         {"class_names", m.class_names},
         {"mean", m.mean},
         {"std", m.stdev},
         {"files",
          {{"train_images", "train/images.dpt"},
           {"train_labels", "train/labels.dpt"},
           {"val_images", "val/images.dpt"},
           {"val_labels", "val/labels.dpt"}}}};
  std::ofstream out(root / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (root / "manifest.json").string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + (root / "manifest.json").string());
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "manifest.json";
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest " + p.string() + ": " + e.what());
  }
  if (j.value("format", "") != "dpt-dataset-v1")
    throw FormatError("bad dataset manifest " + p.string() + ": unknown format");
  DatasetManifest m;
  try {
    m.spec = spec_from_json(j.at("spec"));
    m.n_train = j.at("n_train").get<int64_t>();
    m.n_val = j.at("n_val").get<int64_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.mean = j.at("mean").get<std::vector<double>>();
    m.stdev = j.at("std").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError("bad dataset manifest " + p.string() + ": " + e.what());
  }
  m.root = p.parent_path().string();
  return m;
}

template <class T>
SplitT<T> load_split(const DatasetManifest& m, const std::string& split, bool normalize) {
  if (split != "train" && split != "val")
    throw ArgumentError("unknown split '" + split + "' (want train or val)");
  const fs::path dir = fs::path(m.root) / split;
  SplitT<T> out;
  out.images = read_tensor<T>((dir / "images.dpt").string());
  TensorT<float> labels = read_tensor<float>((dir / "labels.dpt").string());
  if (out.images.rank() != 4)
    throw FormatError("dataset images must be rank 4: " + (dir / "images.dpt").string());
  const int64_t n = out.images.extent(0);
  if (labels.rank() != 1 || labels.extent(0) != n)
    throw FormatError("label count mismatch in " + (dir / "labels.dpt").string());
  out.num_classes = m.spec.num_classes;
  out.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const float f = labels.flat(i);
    const int32_t v = static_cast<int32_t>(f);
    if (static_cast<float>(v) != f || v < 0 || v >= m.spec.num_classes)
      throw FormatError("bad label value in " + (dir / "labels.dpt").string());
    out.labels[static_cast<size_t>(i)] = v;
  }
  if (normalize) {
    const int64_t ch = out.images.extent(3);
    if (ch != static_cast<int64_t>(m.mean.size()))
      throw FormatError("channel count does not match manifest normalization constants");
    T* d = out.images.data();
    const int64_t total = out.images.numel();
    for (int64_t t = 0; t < total; ++t) {
      const int64_t c = t % ch;
      d[t] = static_cast<T>((static_cast<double>(d[t]) - m.mean[c]) / m.stdev[c]);
    }
  }
  return out;
}

template <class T>
BatchLoaderT<T>::BatchLoaderT(const SplitT<T>* split, int64_t batch_size, uint64_t shuffle_seed,
                              bool shuffle)
    : split_(split),
      n_(split ? split->images.extent(0) : 0),
      batch_(batch_size),
      seed_(shuffle_seed),
      shuffle_(shuffle) {
  if (!split_) throw ArgumentError("batch loader needs a split");
  if (batch_ < 1) throw ArgumentError("batch size must be >= 1");
  order_.resize(static_cast<size_t>(n_));
  for (int64_t i = 0; i < n_; ++i) order_[static_cast<size_t>(i)] = i;
}

template <class T>
int64_t BatchLoaderT<T>::num_batches() const {
  return (n_ + batch_ - 1) / batch_;
}

template <class T>
std::vector<int64_t> BatchLoaderT<T>::epoch_permutation(int64_t n, uint64_t seed, int64_t epoch) {
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  Rng r = Rng(seed).fork(static_cast<uint64_t>(epoch));
  for (int64_t i = n - 1; i >= 1; --i) {
    const int64_t j = static_cast<int64_t>(r.uniform_int(static_cast<uint64_t>(i + 1)));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  return order;
}

template <class T>
void BatchLoaderT<T>::begin_epoch(int64_t epoch) {
  if (shuffle_) {
    order_ = epoch_permutation(n_, seed_, epoch);
  }
}

template <class T>
BatchT<T> BatchLoaderT<T>::batch(int64_t index) const {
  if (index < 0 || index >= num_batches()) throw ArgumentError("batch index out of range");
  const int64_t lo = index * batch_;
  const int64_t hi = std::min(lo + batch_, n_);
  const int64_t b = hi - lo;
  const int64_t h = split_->images.extent(1);
  const int64_t w = split_->images.extent(2);
  const int64_t c = split_->images.extent(3);
  const int64_t per = h * w * c;
  BatchT<T> out;
  out.images = TensorT<T>({b, h, w, c});
  out.labels.resize(static_cast<size_t>(b));
  for (int64_t s = 0; s < b; ++s) {
    const int64_t src = order_[static_cast<size_t>(lo + s)];
    std::memcpy(out.images.data() + s * per, split_->images.data() + src * per,
                static_cast<size_t>(per) * sizeof(T));
    out.labels[static_cast<size_t>(s)] = split_->labels[static_cast<size_t>(src)];
  }
  return out;
}

template SplitT<float> load_split<float>(const DatasetManifest&, const std::string&, bool);
template SplitT<double> load_split<double>(const DatasetManifest&, const std::string&, bool);
template class BatchLoaderT<float>;
template class BatchLoaderT<double>;

}  // namespace dpt
