#include "iaunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace iaunet {

namespace {

std::string module_of(const std::string& name) {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport run_gradcheck(Model& model, const data::SceneSample& sample,
                              const LossWeights& weights,
                              const GradCheckOptions& options) {
  Tensor image = ops::reshape(sample.image, {1, 3, sample.record.height,
                                             sample.record.width});
  auto loss_value = [&]() {
    ForwardResult fwd = model.forward(image, ops::BnMode::train);
    PreparedTargets targets =
        prepare_targets(sample.record, sample.validity, fwd.h4, fwd.w4);
    return total_loss(model.config(), model.mask_head(), fwd, targets, weights);
  };

  if (options.parameter_jitter > 0.0) {
    Rng jitter(options.jitter_seed);
    for (auto& entry : model.params().entries()) {
      if (!entry.trainable) continue;
      double* p = entry.tensor.data();
      for (std::int64_t i = 0; i < entry.size(); ++i)
        p[i] += jitter.uniform(-options.parameter_jitter,
                               options.parameter_jitter);
    }
  }

  model.params().zero_grads();
  loss_value().total.backward();

  GradCheckReport report;
  for (auto& entry : model.params().entries()) {
    if (!entry.trainable) continue;
    GradCheckReport::Group group;
    group.name = entry.name;
    const std::vector<double>& analytic = entry.tensor.has_grad()
                                              ? entry.tensor.grad()
                                              : std::vector<double>{};
    const std::int64_t n = entry.size();
    const int samples =
        static_cast<int>(std::min<std::int64_t>(n, options.samples_per_group));
    double* p = entry.tensor.data();
    for (int s = 0; s < samples; ++s) {
      const std::int64_t i = s * n / samples;
      const double keep = p[i];
      double up, down;
      {
        NoGradGuard no_grad;
        p[i] = keep + options.step;
        up = loss_value().total.item();
        p[i] = keep - options.step;
        down = loss_value().total.item();
      }
      p[i] = keep;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      group.max_rel_err = std::max(group.max_rel_err, rel_err(a, numeric));
      ++group.checked;
    }
    report.worst = std::max(report.worst, group.max_rel_err);
    auto& mw = report.module_worst[module_of(entry.name)];
    mw = std::max(mw, group.max_rel_err);
    report.groups.push_back(std::move(group));
  }
  report.pass = report.worst < options.tolerance;
  return report;
}

std::string format_report(const GradCheckReport& report, double tolerance) {
  std::string out;
  char line[256];
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof(line), "%-48s %12.3e  (%d coords)\n",
                  g.name.c_str(), g.max_rel_err, g.checked);
    out += line;
  }
  out += "\nworst per module:\n";
  for (const auto& [module, err] : report.module_worst) {
    std::snprintf(line, sizeof(line), "  %-24s %12.3e %s\n", module.c_str(),
                  err, err < tolerance ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof(line), "\n%s: worst %.3e vs tolerance %.1e\n",
                report.pass ? "PASS" : "FAIL", report.worst, tolerance);
  out += line;
  return out;
}

}  // namespace iaunet
