#pragma once

#include <map>
#include <string>
#include <vector>

#include "iaunet/losses.hpp"

namespace iaunet {

struct GradCheckOptions {
  int samples_per_group = 6;  // evenly spaced coordinates per group
  double step = 1e-4;
  double tolerance = 1e-3;
  // Freshly initialized nets sit exactly on ReLU kinks (zero biases and
  // batchnorm shifts), where one-sided slopes make central differences
  // meaningless; a small deterministic jitter moves the check to a generic
  // point.
  double parameter_jitter = 0.02;
  std::uint64_t jitter_seed = 11;
};

struct GradCheckReport {
  struct Group {
    std::string name;
    double max_rel_err = 0.0;
    int checked = 0;
  };
  std::vector<Group> groups;
  std::map<std::string, double> module_worst;  // name prefix -> worst error
  double worst = 0.0;
  bool pass = false;
};

// Compares analytic parameter gradients of the full training loss against
// central finite differences, a sampled set of coordinates per parameter
// group. The sample is deterministic (even strides), so reruns agree.
GradCheckReport run_gradcheck(Model& model, const data::SceneSample& sample,
                              const LossWeights& weights,
                              const GradCheckOptions& options);

std::string format_report(const GradCheckReport& report, double tolerance);

}  // namespace iaunet
