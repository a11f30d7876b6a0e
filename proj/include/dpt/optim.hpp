#pragma once

#include "dpt/layers.hpp"

namespace dpt {

// Piecewise schedule: linear warmup from 0 over `warmup_steps`, then a half
// cosine from `base_lr` down to `min_lr` across the remaining steps.
struct CosineSchedule {
  double base_lr = 1e-3;
  double min_lr = 0.0;
  int64_t warmup_steps = 0;
  int64_t total_steps = 1;

  double lr_at(int64_t step) const;  // step counts from 1
};

// AdamW with decoupled weight decay.  Decay is applied only to parameters
// whose `decay` flag is set (weights; never biases, norm affines or
// positional tables).
template <class T>
class AdamWT {
 public:
  AdamWT(std::vector<ParamT<T>*> params, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8, double weight_decay = 0.05);

  // Applies one update with the given learning rate and advances t.
  void step(double lr);
  void zero_grad();
  int64_t t() const { return t_; }

 private:
  std::vector<ParamT<T>*> params_;
  std::vector<TensorT<T>> m_, v_;
  double beta1_, beta2_, eps_, wd_;
  int64_t t_ = 0;
};

using AdamW = AdamWT<double>;

}  // namespace dpt
