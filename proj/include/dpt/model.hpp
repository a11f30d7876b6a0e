#pragma once

#include <array>
#include <filesystem>
#include <memory>

#include "dpt/attention.hpp"
#include "dpt/depatch.hpp"

namespace dpt {

struct StageSpec {
  int64_t dim = 0;
  int64_t depth = 0;
  int64_t heads = 0;
  int64_t sr_ratio = 1;
  int64_t mlp_ratio = 4;
  int64_t patch = 2;
};

// Four-stage pyramid classifier.  Stage i tiles the previous feature map
// into patches, embeds them (fixed tiling, or deformable on the stages in
// depatch_stages), layer-normalizes, optionally adds a learned positional
// table, and runs `depth` pre-norm transformer blocks.  A final layer norm,
// token average and linear head produce logits.
struct ModelConfig {
  std::array<StageSpec, 4> stages;
  int64_t input_size = 224;
  int64_t in_chans = 3;
  int64_t num_classes = 1000;
  bool pos_embed = true;

  // Deformable embedding: which stages (1-based) use it, and its knobs.
  std::vector<int64_t> depatch_stages;  // e.g. {2, 3, 4}; empty = none
  int64_t k = 3;
  double r_off = 2.0;
  double r_sc = 4.0;
  bool predict_offsets = true;
  bool predict_scales = true;

  // "identity" zeroes the offset/scale head weights so every starting patch
  // equals the fixed tiling; "truncated-normal" draws them like any weight.
  std::string init = "identity";
  double label_smoothing = 0.0;

  static ModelConfig preset(const std::string& name);  // "pvt-tiny" | "toy"
  void validate() const;                               // throws ConfigError
  bool stage_is_depatch(int64_t stage_1based) const;
  // Token grid side lengths entering each stage and after its patching.
  std::array<int64_t, 4> stage_grid() const;  // post-patch side per stage
};

// Per-stage wiring of one pyramid level.
template <class T>
struct StageT {
  PatchGridSpec grid;
  std::unique_ptr<VanillaPatchEmbedT<T>> vanilla;
  std::unique_ptr<DePatchEmbedT<T>> depatch;
  LayerNormT<T> embed_norm;
  ParamT<T> pos;
  std::vector<BlockT<T>> blocks;
};

template <class T>
class ModelT {
 public:
  ModelT(const ModelConfig& cfg, uint64_t seed);

  // images: [B, H, W, C] -> logits [B, num_classes]
  TensorT<T> forward(const TensorT<T>& images);
  // Mean cross-entropy of the cached logits; fills every parameter's grad.
  T backward(const std::vector<int64_t>& labels);
  // Loss without touching gradients (for probes and eval).
  T loss(const TensorT<T>& logits, const std::vector<int64_t>& labels) const;

  const ModelConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }

  // All trainable parameters in a fixed, documented order.
  std::vector<ParamT<T>*> params();
  ParamT<T>* find_param(const std::string& name);
  int64_t param_count();  // total trainable scalars
  void zero_grad();

  StageT<T>& stage(int64_t i) { return stages_[static_cast<size_t>(i)]; }
  LayerNormT<T>& final_norm() { return norm_; }
  LinearT<T>& head() { return head_; }

  // Mean predicted widths/heights/offset magnitudes per deformable stage of
  // the latest forward (empty for fixed-tiling stages).
  struct GeometryStats {
    int64_t stage = 0;  // 1-based
    int64_t count = 0;
    double sw_sum = 0, sw_sq = 0, sh_sum = 0, sh_sq = 0, od_sum = 0, od_sq = 0;
  };
  std::vector<GeometryStats> last_geometry_stats() const;

  void save_checkpoint(const std::filesystem::path& dir) const;
  static ModelT load_checkpoint(const std::filesystem::path& dir);

 private:
  ModelConfig cfg_;
  uint64_t seed_ = 0;
  std::array<StageT<T>, 4> stages_;
  LayerNormT<T> norm_;
  LinearT<T> head_;
  TensorT<T> logits_cache_;
  TensorT<T> pooled_rows_;  // token count per stage-4 row, for GAP backward
  int64_t cached_batch_ = 0;
  bool has_cache_ = false;
};

using Model = ModelT<double>;
using ModelF = ModelT<float>;

// Exact number of trainable scalars for a configuration.
int64_t count_params(const ModelConfig& cfg);

// Multiply-accumulate walk over every projection at the configured input
// resolution (per image).  Matches the usual convention of profiling only
// matrix products.  count_flops doubles it (one multiply + one add each).
struct MacsBreakdown {
  std::array<int64_t, 4> embed{};   // patch embedding incl. predictor heads
  std::array<int64_t, 4> blocks{};  // attention + mlp per stage
  int64_t head = 0;
  int64_t total = 0;
};
MacsBreakdown count_macs(const ModelConfig& cfg);
int64_t count_flops(const ModelConfig& cfg);

}  // namespace dpt
