#include "iaunet/mask_head.hpp"

#include <algorithm>
#include <cmath>

namespace iaunet {

MaskHead::MaskHead(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng,
                   int backbone_c4)
    : f_proj_(ps, "mask_head.f_proj", backbone_c4, cfg.dim, 1, 1, 0, rng),
      m1_(ps, "mask_head.m1", cfg.dim, cfg.dim, 3, 1, 1, rng),
      m2_(ps, "mask_head.m2", cfg.dim, cfg.dim, 3, 1, 1, rng),
      mask_embed_(ps, "mask_head.mask_embed", cfg.dim, cfg.dim, rng),
      class_head_(ps, "mask_head.class_head", cfg.dim, cfg.num_classes + 1,
                  rng) {}

Tensor MaskHead::fuse_features(const Tensor& x_b, const Tensor& x_m_eighth) {
  Tensor up = ops::bilinear_upsample2x(x_m_eighth);
  if (up.dim(2) != x_b.dim(2) || up.dim(3) != x_b.dim(3))
    throw ShapeError(msg("mask head: upsampled mask features ", up.dim(2), "x",
                         up.dim(3), " do not match the 1/4 map ", x_b.dim(2),
                         "x", x_b.dim(3)));
  Tensor fused = ops::add(f_proj_.forward(x_b), up);
  fused = ops::relu(m1_.forward(fused));
  return ops::relu(m2_.forward(fused));
}

Tensor MaskHead::predict_masks(const Tensor& queries,
                               const Tensor& fused_flat) const {
  return ops::matmul(mask_embed_.forward(queries), fused_flat);
}

Tensor MaskHead::classify(const Tensor& queries) const {
  return class_head_.forward(queries);
}

void rescore(InstancePrediction& pred) {
  const int n = pred.num_queries, kc = pred.num_classes + 1;
  const std::int64_t plane =
      static_cast<std::int64_t>(pred.height) * pred.width;
  pred.class_probs.assign(static_cast<std::size_t>(n) * kc, 0.0);
  pred.scores.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* logits = pred.class_logits.data() + i * kc;
    double mx = logits[0];
    for (int j = 1; j < kc; ++j) mx = std::max(mx, logits[j]);
    double denom = 0.0;
    for (int j = 0; j < kc; ++j) denom += std::exp(logits[j] - mx);
    double best_real = 0.0;
    for (int j = 0; j < kc; ++j) {
      const double p = std::exp(logits[j] - mx) / denom;
      pred.class_probs[i * kc + j] = p;
      if (j < pred.num_classes) best_real = std::max(best_real, p);
    }
    const double* ml = pred.mask_logits.data() + i * plane;
    double fg_sum = 0.0;
    std::int64_t fg_count = 0;
    for (std::int64_t k = 0; k < plane; ++k) {
      const double p = 1.0 / (1.0 + std::exp(-ml[k]));
      if (p > 0.5) {
        fg_sum += p;
        ++fg_count;
      }
    }
    const double maskness = fg_count > 0 ? fg_sum / fg_count : 0.0;
    pred.scores[i] = best_real * maskness;
  }
}

std::vector<ScoredInstance> postprocess(const InstancePrediction& pred,
                                        int out_h, int out_w,
                                        double score_floor) {
  const int n = pred.num_queries, kc = pred.num_classes + 1;
  const std::int64_t plane =
      static_cast<std::int64_t>(pred.height) * pred.width;
  std::vector<ScoredInstance> kept;
  for (int i = 0; i < n; ++i) {
    const double* probs = pred.class_probs.data() + i * kc;
    int best = 0;
    for (int j = 1; j < kc; ++j)
      if (probs[j] > probs[best]) best = j;
    if (best == pred.num_classes) continue;  // "no object"
    if (pred.scores[i] < score_floor) continue;
    data::MaskGrid mask(out_h, out_w);
    const double* ml = pred.mask_logits.data() + i * plane;
    for (int y = 0; y < out_h; ++y) {
      const int sy = y * pred.height / out_h;
      for (int x = 0; x < out_w; ++x) {
        const int sx = x * pred.width / out_w;
        mask.set(y, x, ml[sy * pred.width + sx] > 0.0 ? 1 : 0);
      }
    }
    ScoredInstance inst;
    inst.query_index = i;
    inst.class_id = best;
    inst.score = pred.scores[i];
    inst.mask = std::move(mask);
    kept.push_back(std::move(inst));
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ScoredInstance& a, const ScoredInstance& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.query_index < b.query_index;
                   });
  return kept;
}

}  // namespace iaunet
