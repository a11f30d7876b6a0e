#include "dpt/runconfig.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>

#include "dpt/errors.hpp"

namespace dpt {

using nlohmann::json;

void RunConfig::validate() const {
  model.validate();
  if (lr <= 0.0) throw ConfigError("config: lr must be > 0");
  if (min_lr < 0.0) throw ConfigError("config: min_lr must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("config: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("config: betas must lie in [0, 1)");
  if (adam_eps <= 0.0) throw ConfigError("config: adam_eps must be > 0");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (warmup_frac < 0.0 || warmup_frac > 1.0)
    throw ConfigError("config: warmup_frac must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (dtype != "f32" && dtype != "f64")
    throw ConfigError("config: dtype must be f32 or f64");
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"preset", c.preset},
           {"model", c.model},
           {"lr", c.lr},
           {"min_lr", c.min_lr},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"adam_eps", c.adam_eps},
           {"epochs", c.epochs},
           {"warmup_frac", c.warmup_frac},
           {"batch_size", c.batch_size},
           {"seed", c.seed},
           {"dtype", c.dtype},
           {"data_dir", c.data_dir},
           {"out_dir", c.out_dir},
           {"serial", c.serial}};
}

namespace {

std::vector<std::string> split_path(const std::string& key) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : key) {
    if (ch == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts)
    if (p.empty()) throw ArgumentError("bad override path '" + key + "'");
  return parts;
}

bool all_digits(const std::string& s) {
  for (char c : s)
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return !s.empty();
}

}  // namespace

void apply_override(json& j, const std::string& key_eq_value) {
  const size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ArgumentError("override must look like key=value: '" + key_eq_value + "'");
  const std::string key = key_eq_value.substr(0, eq);
  const std::string text = key_eq_value.substr(eq + 1);

  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;  // bare strings need no quoting
  }

  json* node = &j;
  const auto parts = split_path(key);
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    const std::string& p = parts[i];
    if (all_digits(p)) {
      if (!node->is_array()) throw ArgumentError("override '" + key + "': '" + p + "' indexes a non-array");
      const size_t idx = static_cast<size_t>(std::stoull(p));
      if (idx >= node->size()) throw ArgumentError("override '" + key + "': index out of range");
      node = &(*node)[idx];
    } else {
      node = &(*node)[p];
    }
  }
  const std::string& last = parts.back();
  if (all_digits(last) && node->is_array()) {
    const size_t idx = static_cast<size_t>(std::stoull(last));
    if (idx >= node->size()) throw ArgumentError("override '" + key + "': index out of range");
    (*node)[idx] = value;
  } else {
    (*node)[last] = value;
  }
}

RunConfig load_run_config(const std::string& config_file,
                          const std::vector<std::string>& overrides) {
  json file_json = json::object();
  if (!config_file.empty()) {
    std::ifstream in(config_file, std::ios::binary);
    if (!in) throw IoError("cannot open config file " + config_file);
    try {
      in >> file_json;
    } catch (const json::exception& e) {
      throw FormatError("bad config file " + config_file + ": " + e.what());
    }
    if (!file_json.is_object())
      throw FormatError("bad config file " + config_file + ": expected an object");
  }

  // The preset (from override, else file, else default) seeds the model
  // section before any field-level merging happens.
  std::string preset = file_json.value("preset", std::string("toy"));
  for (const auto& kv : overrides)
    if (kv.rfind("preset=", 0) == 0) preset = kv.substr(7);

  RunConfig defaults;
  defaults.preset = preset;
  defaults.model = ModelConfig::preset(preset);
  json j;
  to_json(j, defaults);

  for (auto it = file_json.begin(); it != file_json.end(); ++it) {
    if (it.key() == "model") {
      if (!it.value().is_object())
        throw FormatError("config 'model' must be an object");
      j["model"].update(it.value());
    } else {
      j[it.key()] = it.value();
    }
  }
  for (const auto& kv : overrides) apply_override(j, kv);

  RunConfig cfg;
  try {
    cfg.preset = j.value("preset", cfg.preset);
    cfg.model = j.at("model").get<ModelConfig>();
    cfg.lr = j.value("lr", cfg.lr);
    cfg.min_lr = j.value("min_lr", cfg.min_lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.adam_eps = j.value("adam_eps", cfg.adam_eps);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.warmup_frac = j.value("warmup_frac", cfg.warmup_frac);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.dtype = j.value("dtype", cfg.dtype);
    cfg.data_dir = j.value("data_dir", cfg.data_dir);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.serial = j.value("serial", cfg.serial);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string config_echo(const RunConfig& c) {
  json j;
  to_json(j, c);
  return j.dump();
}

uint64_t fnv1a64(const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash_hex(const RunConfig& c) {
  const std::string echo = config_echo(c);
  const uint64_t h = fnv1a64(echo.data(), echo.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace dpt
