#pragma once

#include <cstdint>
#include <vector>

#include "iaunet/nn.hpp"

namespace iaunet::optim {

// Decoupled weight decay Adam. Moment slots follow the store's trainable
// entries in registration order; state starts at zero on the first step.
class AdamW {
 public:
  explicit AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(nn::ParamStore& store, double lr, double weight_decay);

  std::int64_t step_count() const { return step_; }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  double beta1_, beta2_, eps_;
  std::int64_t step_ = 0;
  std::vector<Slot> slots_;
};

// Cosine annealing from lr_max down to lr_min over `total` steps; step is
// 0-based.
double cosine_lr(std::int64_t step, std::int64_t total, double lr_max,
                 double lr_min);

}  // namespace iaunet::optim
