#include "iaunet/optim.hpp"

#include <cmath>

namespace iaunet::optim {

void AdamW::step(nn::ParamStore& store, double lr, double weight_decay) {
  auto& entries = store.entries();
  if (slots_.empty()) {
    for (auto& e : entries) {
      Slot s;
      if (e.trainable) {
        s.m.assign(static_cast<std::size_t>(e.size()), 0.0);
        s.v.assign(static_cast<std::size_t>(e.size()), 0.0);
      }
      slots_.push_back(std::move(s));
    }
  }
  if (slots_.size() != entries.size())
    throw ContractError("optimizer state does not match the parameter store");

  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t idx = 0; idx < entries.size(); ++idx) {
    auto& e = entries[idx];
    if (!e.trainable) continue;
    auto& slot = slots_[idx];
    double* p = e.tensor.data();
    const bool has_grad = e.tensor.has_grad();
    const std::vector<double>* g = has_grad ? &e.tensor.grad() : nullptr;
    for (std::int64_t i = 0; i < e.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      p[i] *= 1.0 - lr * weight_decay;
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = slot.m[i] / bc1;
      const double vhat = slot.v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double cosine_lr(std::int64_t step, std::int64_t total, double lr_max,
                 double lr_min) {
  if (total <= 1) return lr_max;
  const double t =
      static_cast<double>(step) / static_cast<double>(total - 1);
  const double clamped = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  return lr_min +
         0.5 * (lr_max - lr_min) *
             (1.0 + std::cos(3.14159265358979323846 * clamped));
}

}  // namespace iaunet::optim
