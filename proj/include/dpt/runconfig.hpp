#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dpt/model_json.hpp"

namespace dpt {

// One run's worth of knobs: model, optimizer, schedule, data and output
// paths.  `lr` is quoted at a reference batch of 1024 and scaled linearly to
// the actual batch size; warmup covers `warmup_frac` of all steps, the rest
// follows a cosine decay to min_lr.
struct RunConfig {
  std::string preset = "toy";
  ModelConfig model = ModelConfig::preset("toy");

  double lr = 1e-3;
  double min_lr = 0.0;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int64_t epochs = 60;
  double warmup_frac = 0.05;
  int64_t batch_size = 128;
  uint64_t seed = 1;
  std::string dtype = "f32";  // training precision: f32 | f64
  std::string data_dir = "data";
  std::string out_dir = "run";
  bool serial = true;  // kept in the config echo; this build is always serial

  double effective_lr() const {
    return lr * static_cast<double>(batch_size) / 1024.0;
  }
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);

// Sets one dotted path in a JSON tree, e.g. "model.k=2" or
// "model.stages.3.dim=256".  Numeric tokens index arrays; the value text is
// parsed as JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& key_eq_value);

// Resolves preset -> optional config file -> --set overrides, in that order.
RunConfig load_run_config(const std::string& config_file,
                          const std::vector<std::string>& overrides);

// Canonical single-line echo of the config, and its FNV-1a hash; both are
// stamped into every artifact a command emits.
std::string config_echo(const RunConfig& c);
std::string config_hash_hex(const RunConfig& c);
uint64_t fnv1a64(const void* data, size_t n);

}  // namespace dpt
