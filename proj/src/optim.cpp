#include "dpt/optim.hpp"

#include <cmath>

namespace dpt {

double CosineSchedule::lr_at(int64_t step) const {
  if (step < 1) throw ArgumentError("schedule step must be >= 1");
  if (warmup_steps > 0 && step <= warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const int64_t span = total_steps - warmup_steps;
  if (span <= 0) return min_lr;
  const double u =
      static_cast<double>(step - warmup_steps) / static_cast<double>(span);
  const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * (u > 1.0 ? 1.0 : u)));
  return min_lr + (base_lr - min_lr) * c;
}

template <class T>
AdamWT<T>::AdamWT(std::vector<ParamT<T>*> params, double beta1, double beta2,
                  double eps, double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      wd_(weight_decay) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (auto* p : params_) {
    if (!p) throw ArgumentError("AdamW given a null parameter");
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

template <class T>
void AdamWT<T>::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    ParamT<T>& p = *params_[i];
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = m_[i].data();
    T* v = v_[i].data();
    const int64_t n = p.value.numel();
    const double decay = p.decay ? wd_ : 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * gj;
      const double vj = beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      double wj = static_cast<double>(w[j]);
      wj -= lr * (mhat / (std::sqrt(vhat) + eps_) + decay * wj);
      w[j] = static_cast<T>(wj);
    }
  }
}

template <class T>
void AdamWT<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template class AdamWT<float>;
template class AdamWT<double>;

}  // namespace dpt
