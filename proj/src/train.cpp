#include "dpt/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dpt/data.hpp"
#include "dpt/model.hpp"
#include "dpt/optim.hpp"

namespace dpt {

namespace fs = std::filesystem;

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

template <class T>
std::vector<GeoRow> finish_geo(const std::vector<typename ModelT<T>::GeometryStats>& acc) {
  std::vector<GeoRow> out;
  for (const auto& g : acc) {
    if (g.count == 0) continue;
    const double n = static_cast<double>(g.count);
    GeoRow r;
    r.stage = g.stage;
    r.sw_mean = g.sw_sum / n;
    r.sw_std = std::sqrt(std::max(0.0, g.sw_sq / n - r.sw_mean * r.sw_mean));
    r.sh_mean = g.sh_sum / n;
    r.sh_std = std::sqrt(std::max(0.0, g.sh_sq / n - r.sh_mean * r.sh_mean));
    r.od_mean = g.od_sum / n;
    r.od_std = std::sqrt(std::max(0.0, g.od_sq / n - r.od_mean * r.od_mean));
    out.push_back(r);
  }
  return out;
}

template <class T>
struct SplitEval {
  double loss = 0, acc = 0;
  int64_t n = 0;
  std::vector<GeoRow> geo;
};

template <class T>
SplitEval<T> eval_split(ModelT<T>& model, const SplitT<T>& split, int64_t batch_size) {
  BatchLoaderT<T> loader(&split, batch_size, 0, /*shuffle=*/false);
  double loss_sum = 0.0;
  int64_t correct = 0, seen = 0;
  std::vector<typename ModelT<T>::GeometryStats> geo_acc;
  for (int64_t b = 0; b < loader.num_batches(); ++b) {
    BatchT<T> batch = loader.batch(b);
    std::vector<int64_t> labels(batch.labels.begin(), batch.labels.end());
    TensorT<T> logits = model.forward(batch.images);
    loss_sum += static_cast<double>(model.loss(logits, labels)) *
                static_cast<double>(logits.extent(0));
    const int64_t bs = logits.extent(0);
    const int64_t classes = logits.extent(1);
    for (int64_t i = 0; i < bs; ++i) {
      const T* row = logits.data() + i * classes;
      int64_t arg = 0;
      for (int64_t c = 1; c < classes; ++c)
        if (row[c] > row[arg]) arg = c;
      if (arg == labels[static_cast<size_t>(i)]) ++correct;
    }
    seen += bs;
    auto stats = model.last_geometry_stats();
    if (geo_acc.empty()) {
      geo_acc = stats;
    } else {
      for (size_t s = 0; s < stats.size(); ++s) {
        geo_acc[s].count += stats[s].count;
        geo_acc[s].sw_sum += stats[s].sw_sum;
        geo_acc[s].sw_sq += stats[s].sw_sq;
        geo_acc[s].sh_sum += stats[s].sh_sum;
        geo_acc[s].sh_sq += stats[s].sh_sq;
        geo_acc[s].od_sum += stats[s].od_sum;
        geo_acc[s].od_sq += stats[s].od_sq;
      }
    }
  }
  SplitEval<T> out;
  out.n = seen;
  out.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
  out.acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  out.geo = finish_geo<T>(geo_acc);
  return out;
}

void write_metrics(const std::string& path, const RunConfig& cfg,
                   const std::vector<EpochRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "# config_hash=" << config_hash_hex(cfg) << "\n";
  out << "# config=" << config_echo(cfg) << "\n";
  out << "epoch,lr,train_loss,val_loss,val_acc";
  std::vector<int64_t> stages = cfg.model.depatch_stages;
  for (int64_t s : stages)
    out << ",stage" << s << "_sw_mean,stage" << s << "_sw_std,stage" << s << "_sh_mean,stage"
        << s << "_sh_std,stage" << s << "_od_mean,stage" << s << "_od_std";
  out << "\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << fmt_g17(r.lr) << ',' << fmt_g17(r.train_loss) << ','
        << fmt_g17(r.val_loss) << ',' << fmt_g17(r.val_acc);
    for (int64_t s : stages) {
      const GeoRow* g = nullptr;
      for (const auto& cand : r.geo)
        if (cand.stage == s) g = &cand;
      if (!g) throw StateError("missing geometry stats for stage " + std::to_string(s));
      out << ',' << fmt_g17(g->sw_mean) << ',' << fmt_g17(g->sw_std) << ','
          << fmt_g17(g->sh_mean) << ',' << fmt_g17(g->sh_std) << ',' << fmt_g17(g->od_mean)
          << ',' << fmt_g17(g->od_std);
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for " + path);
}

void write_norm_sidecar(const fs::path& dir, const DatasetManifest& m) {
  nlohmann::json j{{"mean", m.mean},
                   {"std", m.stdev},
                   {"canvas", {m.spec.height, m.spec.width, m.spec.channels}}};
  std::ofstream out(dir / "norm.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "norm.json").string());
  out << j.dump(2) << "\n";
}

template <class T>
TrainResult train_impl(const RunConfig& cfg) {
  const DatasetManifest manifest = load_manifest(cfg.data_dir);
  if (manifest.spec.num_classes != static_cast<int>(cfg.model.num_classes))
    throw ConfigError("dataset has " + std::to_string(manifest.spec.num_classes) +
                      " classes but the model expects " +
                      std::to_string(cfg.model.num_classes));
  if (manifest.spec.height != cfg.model.input_size ||
      manifest.spec.width != cfg.model.input_size)
    throw ConfigError("dataset canvas does not match model input_size");

  const SplitT<T> train = load_split<T>(manifest, "train");
  const SplitT<T> val = load_split<T>(manifest, "val");

  ModelT<T> model(cfg.model, cfg.seed);
  AdamWT<T> opt(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  BatchLoaderT<T> loader(&train, cfg.batch_size, cfg.seed, /*shuffle=*/true);

  const int64_t steps_per_epoch = loader.num_batches();
  CosineSchedule sched;
  sched.base_lr = cfg.effective_lr();
  sched.min_lr = cfg.min_lr;
  sched.total_steps = steps_per_epoch * cfg.epochs;
  sched.warmup_steps = static_cast<int64_t>(
      std::llround(cfg.warmup_frac * static_cast<double>(sched.total_steps)));

  const fs::path out_root(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir + ": " + ec.message());
  {
    std::ofstream cj(out_root / "config.json", std::ios::binary);
    if (!cj) throw IoError("cannot write " + (out_root / "config.json").string());
    cj << config_echo(cfg) << "\n";
  }

  TrainResult result;
  result.out_dir = out_root.string();
  result.best_dir = (out_root / "checkpoint-best").string();
  result.final_dir = (out_root / "checkpoint-final").string();
  result.metrics_path = (out_root / "metrics.csv").string();
  result.timing_path = (out_root / "timing.csv").string();

  std::vector<std::pair<int64_t, double>> timing;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  {
    SplitEval<T> ev = eval_split(model, val, cfg.batch_size);
    EpochRow row;
    row.epoch = 0;
    row.lr = std::nan("");
    row.train_loss = std::nan("");
    row.val_loss = ev.loss;
    row.val_acc = ev.acc;
    row.geo = ev.geo;
    result.rows.push_back(std::move(row));
    result.best_val_acc = ev.acc;
    result.best_epoch = 0;
    fs::remove_all(result.best_dir);
    model.save_checkpoint(result.best_dir);
    write_norm_sidecar(result.best_dir, manifest);
    timing.emplace_back(0, elapsed());
  }

  int64_t step = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t_epoch = elapsed();
    loader.begin_epoch(epoch);
    double loss_sum = 0.0;
    int64_t seen = 0;
    double lr = sched.base_lr;
    for (int64_t b = 0; b < steps_per_epoch; ++b) {
      BatchT<T> batch = loader.batch(b);
      std::vector<int64_t> labels(batch.labels.begin(), batch.labels.end());
      model.zero_grad();
      model.forward(batch.images);
      const double loss = static_cast<double>(model.backward(labels));
      if (!std::isfinite(loss))
        throw StateError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch) + ", step " + std::to_string(b));
      ++step;
      lr = sched.lr_at(step);
      opt.step(lr);
      const int64_t bs = batch.images.extent(0);
      loss_sum += loss * static_cast<double>(bs);
      seen += bs;
    }

    SplitEval<T> ev = eval_split(model, val, cfg.batch_size);
    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(seen);
    row.val_loss = ev.loss;
    row.val_acc = ev.acc;
    row.geo = ev.geo;
    result.rows.push_back(std::move(row));

    if (ev.acc > result.best_val_acc) {
      result.best_val_acc = ev.acc;
      result.best_epoch = epoch;
      fs::remove_all(result.best_dir);
      model.save_checkpoint(result.best_dir);
      write_norm_sidecar(result.best_dir, manifest);
    }
    timing.emplace_back(epoch, elapsed() - t_epoch);
    std::fprintf(stderr, "[train %s] epoch %lld/%lld loss=%.4f val_acc=%.4f (%.1fs)\n",
                 config_hash_hex(cfg).c_str(), static_cast<long long>(epoch),
                 static_cast<long long>(cfg.epochs), result.rows.back().train_loss, ev.acc,
                 elapsed() - t_epoch);
  }

  result.final_val_acc = result.rows.back().val_acc;
  fs::remove_all(result.final_dir);
  model.save_checkpoint(result.final_dir);
  write_norm_sidecar(result.final_dir, manifest);
  write_metrics(result.metrics_path, cfg, result.rows);
  {
    std::ofstream out(result.timing_path, std::ios::binary);
    if (!out) throw IoError("cannot write " + result.timing_path);
    out << "# config_hash=" << config_hash_hex(cfg) << "\n";
    out << "# config=" << config_echo(cfg) << "\n";
    out << "epoch,wall_s\n";
    char buf[64];
    for (const auto& [e, s] : timing) {
      std::snprintf(buf, sizeof(buf), "%lld,%.6f\n", static_cast<long long>(e), s);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "total,%.6f\n", elapsed());
    out << buf;
  }
  return result;
}

}  // namespace

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dtype == "f64") return train_impl<double>(cfg);
  return train_impl<float>(cfg);
}

std::string checkpoint_dtype(const std::string& checkpoint_dir) {
  std::ifstream in(fs::path(checkpoint_dir) / "manifest.json");
  if (!in) throw IoError("cannot open checkpoint manifest in " + checkpoint_dir);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint manifest in " + checkpoint_dir + " is not valid JSON: " +
                      e.what());
  }
  const std::string dtype = manifest.value("dtype", "");
  if (dtype != "f32" && dtype != "f64")
    throw FormatError("checkpoint manifest in " + checkpoint_dir + " has unknown dtype");
  return dtype;
}

namespace {

template <class T>
EvalReport eval_impl(const std::string& checkpoint_dir, const std::string& data_dir,
                     const std::string& split, int64_t batch_size) {
  ModelT<T> model = ModelT<T>::load_checkpoint(checkpoint_dir);
  const DatasetManifest manifest = load_manifest(data_dir);
  if (manifest.spec.num_classes != static_cast<int>(model.config().num_classes))
    throw ConfigError("dataset classes do not match checkpoint");
  if (manifest.spec.height != model.config().input_size ||
      manifest.spec.width != model.config().input_size)
    throw ConfigError("dataset canvas does not match checkpoint input_size");
  const SplitT<T> data = load_split<T>(manifest, split);
  if (data.images.extent(0) == 0) throw ArgumentError("split '" + split + "' is empty");
  SplitEval<T> ev = eval_split(model, data, batch_size);
  EvalReport rep;
  rep.loss = ev.loss;
  rep.acc = ev.acc;
  rep.n = ev.n;
  rep.geo = ev.geo;
  return rep;
}

}  // namespace

EvalReport eval_checkpoint(const std::string& checkpoint_dir, const std::string& data_dir,
                           const std::string& split, int64_t batch_size) {
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (checkpoint_dtype(checkpoint_dir) == "f64")
    return eval_impl<double>(checkpoint_dir, data_dir, split, batch_size);
  return eval_impl<float>(checkpoint_dir, data_dir, split, batch_size);
}

}  // namespace dpt
