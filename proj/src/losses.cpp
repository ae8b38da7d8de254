#include "iaunet/losses.hpp"

#include <algorithm>
#include <cmath>

namespace iaunet {

Tensor dice_loss(const Tensor& pred_probs, const Tensor& gt, double eps) {
  if (pred_probs.size() != gt.size())
    throw ShapeError(msg("dice_loss: ", pred_probs.size(), " vs ", gt.size(),
                         " elements"));
  Tensor inter = ops::sum(ops::mul(pred_probs, gt));
  Tensor num = ops::add_scalar(ops::mul_scalar(inter, 2.0), eps);
  Tensor den =
      ops::add_scalar(ops::add(ops::sum(pred_probs), ops::sum(gt)), eps);
  return ops::add_scalar(ops::mul_scalar(ops::div(num, den), -1.0), 1.0);
}

PreparedTargets prepare_targets(const data::AnnotationRecord& record,
                                const data::MaskGrid& validity, int h, int w) {
  if (record.height % h != 0 || record.width % w != 0)
    throw ShapeError(msg("prepare_targets: image ", record.height, "x",
                         record.width, " is not a multiple of the logit grid ",
                         h, "x", w));
  const int fy = record.height / h, fx = record.width / w;
  const double block = static_cast<double>(fy) * fx;

  auto downsample = [&](const data::MaskGrid& m) {
    std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int covered = 0;
        for (int dy = 0; dy < fy; ++dy)
          for (int dx = 0; dx < fx; ++dx)
            covered += m.at(y * fy + dy, x * fx + dx) ? 1 : 0;
        out[static_cast<std::size_t>(y) * w + x] =
            covered > 0.5 * block ? 1.0 : 0.0;
      }
    return out;
  };

  PreparedTargets t;
  t.h = h;
  t.w = w;
  for (const auto& inst : record.instances) {
    t.masks.push_back(Tensor::from_data({h * w}, downsample(inst.mask)));
    t.classes.push_back(inst.class_id);
  }
  if (!validity.values.empty()) {
    bool all_valid = validity.area() == static_cast<std::int64_t>(
                                            validity.values.size());
    if (!all_valid)
      t.valid = Tensor::from_data({h * w}, downsample(validity));
  }
  return t;
}

namespace {

// Detached per-pair mask costs on raw logit values.
double bce_cost(const double* logits, const double* gt, const double* valid,
                std::int64_t n) {
  double total = 0.0, weight = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double wv = valid ? valid[i] : 1.0;
    const double x = logits[i];
    total += wv * (std::max(x, 0.0) - x * gt[i] +
                   std::log1p(std::exp(-std::fabs(x))));
    weight += wv;
  }
  return weight > 0.0 ? total / weight : 0.0;
}

double dice_cost(const double* logits, const double* gt, const double* valid,
                 std::int64_t n, double eps = 1.0) {
  double inter = 0.0, psum = 0.0, gsum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double wv = valid ? valid[i] : 1.0;
    const double p = wv / (1.0 + std::exp(-logits[i]));
    inter += p * gt[i];
    psum += p;
    gsum += gt[i];
  }
  return 1.0 - (2.0 * inter + eps) / (psum + gsum + eps);
}

struct PointPrediction {
  Tensor mask_logits;   // [N,S]
  Tensor class_logits;  // [N,K+1]
};

Tensor point_loss(const ModelConfig& cfg, const PointPrediction& pred,
                  const PreparedTargets& targets, const LossWeights& weights,
                  double& cls_out, double& dice_out, double& bce_out) {
  const int n = cfg.num_queries;
  const int m = static_cast<int>(targets.masks.size());
  std::vector<int> class_targets(n, cfg.num_classes);  // default "no object"
  std::vector<std::pair<int, int>> pairs;
  if (m > 0) {
    const auto cost = matching_cost(pred.mask_logits, pred.class_logits,
                                    targets, weights);
    const MatchAssignment assignment = hungarian(cost, n, m);
    pairs = assignment.pairs;
    for (auto [p, g] : pairs) class_targets[p] = targets.classes[g];
  }

  std::vector<double> class_weights(cfg.num_classes + 1, 1.0);
  class_weights[cfg.num_classes] = weights.no_object;
  Tensor cls =
      ops::cross_entropy_weighted(pred.class_logits, class_targets,
                                  class_weights);
  cls_out += cls.item();
  Tensor total = ops::mul_scalar(cls, weights.cls);

  if (!pairs.empty()) {
    Tensor dice_sum, bce_sum;
    for (auto [p, g] : pairs) {
      Tensor row = ops::select_row(pred.mask_logits, p);
      const Tensor& gt = targets.masks[g];
      Tensor bce = ops::bce_with_logits_mean(row, gt, targets.valid);
      Tensor probs = ops::sigmoid(row);
      if (targets.valid.defined()) probs = ops::mul(probs, targets.valid);
      Tensor dice = dice_loss(probs, gt);
      dice_sum = dice_sum.defined() ? ops::add(dice_sum, dice) : dice;
      bce_sum = bce_sum.defined() ? ops::add(bce_sum, bce) : bce;
    }
    const double inv = 1.0 / static_cast<double>(pairs.size());
    Tensor dice_mean = ops::mul_scalar(dice_sum, inv);
    Tensor bce_mean = ops::mul_scalar(bce_sum, inv);
    dice_out += dice_mean.item();
    bce_out += bce_mean.item();
    total = ops::add(total, ops::mul_scalar(dice_mean, weights.dice));
    total = ops::add(total, ops::mul_scalar(bce_mean, weights.bce));
  }
  return total;
}

}  // namespace

std::vector<double> matching_cost(const Tensor& mask_logits,
                                  const Tensor& class_logits,
                                  const PreparedTargets& targets,
                                  const LossWeights& weights) {
  const int n = mask_logits.dim(0);
  const int m = static_cast<int>(targets.masks.size());
  const std::int64_t s = mask_logits.dim(1);
  const int kc = class_logits.dim(1);
  const double* valid = targets.valid.defined() ? targets.valid.data() : nullptr;

  std::vector<double> cost(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i) {
    // softmax of this row's class logits, detached
    const double* row = class_logits.data() + static_cast<std::int64_t>(i) * kc;
    double mx = row[0];
    for (int j = 1; j < kc; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < kc; ++j) denom += std::exp(row[j] - mx);
    const double* logits = mask_logits.data() + i * s;
    for (int k = 0; k < m; ++k) {
      const int cls = targets.classes[k];
      if (cls < 0 || cls >= kc - 1)
        throw ValidationError(msg("ground-truth class ", cls,
                                  " out of range for ", kc - 1, " classes"));
      const double prob = std::exp(row[cls] - mx) / denom;
      const double* gt = targets.masks[k].data();
      cost[static_cast<std::size_t>(i) * m + k] =
          weights.cls * (-prob) + weights.dice * dice_cost(logits, gt, valid, s) +
          weights.bce * bce_cost(logits, gt, valid, s);
    }
  }
  return cost;
}

LossBreakdown total_loss(const ModelConfig& cfg, MaskHead& head,
                         const ForwardResult& fwd,
                         const PreparedTargets& targets,
                         const LossWeights& weights) {
  std::vector<int> supervised_states;
  switch (cfg.deep_supervision) {
    case DeepSupervision::per_block:
      for (int i = 0; i < static_cast<int>(fwd.states.size()); ++i)
        supervised_states.push_back(i);
      break;
    case DeepSupervision::per_layer:
      for (int i = 0; i < static_cast<int>(fwd.states.size()); ++i)
        if (fwd.schedule[i].second == cfg.blocks_per_layer - 1)
          supervised_states.push_back(i);
      break;
    case DeepSupervision::off:
      break;
  }

  LossBreakdown out;
  Tensor total;
  auto add_point = [&](const PointPrediction& pred) {
    Tensor pt = point_loss(cfg, pred, targets, weights, out.cls, out.dice,
                           out.bce);
    out.per_supervision_point.push_back(pt.item());
    total = total.defined() ? ops::add(total, pt) : pt;
  };

  for (int idx : supervised_states) {
    PointPrediction pred;
    pred.mask_logits = head.predict_masks(fwd.states[idx], fwd.fused_flat);
    pred.class_logits = head.classify(fwd.states[idx]);
    add_point(pred);
  }
  add_point({fwd.final_mask_logits, fwd.final_class_logits});

  out.total = total;
  out.supervision_points = static_cast<int>(out.per_supervision_point.size());
  return out;
}

}  // namespace iaunet
