#pragma once

// Central finite-difference oracle used across the test suites. Kept
// independent of any analytic backward path: it only re-evaluates a forward
// closure at perturbed inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "iaunet/tensor.hpp"

namespace testsupport {

// Relative error with a unit floor, so near-zero gradients are compared
// absolutely and large ones relatively.
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

// Worst relative error between d loss / d leaf and central differences over
// every coordinate of `leaf`. `forward` must rebuild the loss from current
// leaf data each call.
inline double max_grad_error(iaunet::Tensor leaf,
                             const std::function<iaunet::Tensor()>& forward,
                             double h = 1e-4) {
  leaf.zero_grad();
  forward().backward();
  const std::vector<double> analytic = leaf.grad();

  double worst = 0.0;
  double* p = leaf.data();
  for (std::int64_t i = 0; i < leaf.size(); ++i) {
    const double keep = p[i];
    double up, down;
    {
      iaunet::NoGradGuard ng;
      p[i] = keep + h;
      up = forward().item();
      p[i] = keep - h;
      down = forward().item();
    }
    p[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic[i], numeric));
  }
  return worst;
}

}  // namespace testsupport
