#pragma once

#include <string>
#include <vector>

#include "dpt/runconfig.hpp"

namespace dpt {

// Mean/std of predicted widths, heights and offset magnitudes for one
// deformable stage, aggregated over a full split.
struct GeoRow {
  int64_t stage = 0;
  double sw_mean = 0, sw_std = 0, sh_mean = 0, sh_std = 0, od_mean = 0, od_std = 0;
};

struct EpochRow {
  int64_t epoch = 0;
  double lr = 0;          // last step's learning rate (nan on the init row)
  double train_loss = 0;  // nan on the init row
  double val_loss = 0;
  double val_acc = 0;
  std::vector<GeoRow> geo;  // one row per deformable stage, ascending
};

struct TrainResult {
  std::vector<EpochRow> rows;  // rows[0] is the pre-training evaluation
  int64_t best_epoch = 0;
  double best_val_acc = 0;
  double final_val_acc = 0;
  std::string out_dir, metrics_path, timing_path, best_dir, final_dir;
};

// Runs one full training job: deterministic given (config, dataset).
// Artifacts written under cfg.out_dir (overwriting previous contents):
//   metrics.csv   per-epoch log, byte-reproducible across reruns
//   timing.csv    wall-clock per epoch (excluded from metrics for that reason)
//   config.json   resolved config echo
//   checkpoint-best/, checkpoint-final/   model states + norm.json sidecar
TrainResult train_run(const RunConfig& cfg);

struct EvalReport {
  double loss = 0;
  double acc = 0;
  int64_t n = 0;
  std::vector<GeoRow> geo;
};

// Top-1 accuracy of a stored checkpoint over a dataset split; precision
// follows the checkpoint's recorded dtype.
EvalReport eval_checkpoint(const std::string& checkpoint_dir, const std::string& data_dir,
                           const std::string& split, int64_t batch_size);

// Reads the "dtype" field of a checkpoint manifest ("f32" or "f64").
std::string checkpoint_dtype(const std::string& checkpoint_dir);

}  // namespace dpt
