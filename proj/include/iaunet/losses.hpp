#pragma once

#include <vector>

#include "iaunet/config.hpp"
#include "iaunet/data.hpp"
#include "iaunet/matching.hpp"
#include "iaunet/model.hpp"

namespace iaunet {

// One shared record drives both the matching cost and the training loss, so
// the two cannot drift apart.
struct LossWeights {
  double cls = 1.0;
  double dice = 2.0;
  double bce = 5.0;
  double no_object = 0.1;
};

// 1 - (2 sum(p g) + eps) / (sum p + sum g + eps)
Tensor dice_loss(const Tensor& pred_probs, const Tensor& gt, double eps = 1.0);

// Ground truth of one image prepared on the mask-logit grid.
struct PreparedTargets {
  int h = 0, w = 0;
  std::vector<Tensor> masks;  // constant [h*w] tensors of 0/1
  std::vector<int> classes;
  Tensor valid;  // constant [h*w] weights, undefined = all valid
};

// Area-threshold (> 0.5 block coverage) downsampling of ground-truth masks
// (and the validity mask) onto an (h, w) grid `factor` times smaller.
PreparedTargets prepare_targets(const data::AnnotationRecord& record,
                                const data::MaskGrid& validity, int h, int w);

// Entry (n,k) = cls_w * (-prob_n[class_k]) + dice_w * dice + bce_w * bce,
// computed on detached values.
std::vector<double> matching_cost(const Tensor& mask_logits,
                                  const Tensor& class_logits,
                                  const PreparedTargets& targets,
                                  const LossWeights& weights);

struct LossBreakdown {
  Tensor total;              // differentiable
  double cls = 0.0, dice = 0.0, bce = 0.0;  // weighted sums over points
  std::vector<double> per_supervision_point;
  int supervision_points = 0;
};

// Deep-supervised set loss: every selected query state plus the final
// prediction is matched and scored independently against the same fused
// feature map; the per-point losses are summed.
LossBreakdown total_loss(const ModelConfig& cfg, MaskHead& head,
                         const ForwardResult& fwd,
                         const PreparedTargets& targets,
                         const LossWeights& weights);

}  // namespace iaunet
