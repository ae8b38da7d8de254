#pragma once

#include <vector>

#include "iaunet/data.hpp"
#include "iaunet/transformer_decoder.hpp"

namespace iaunet {

// Predicted instances of one image at mask-logit resolution plus inference
// extras (class probabilities and rescored confidences).
struct InstancePrediction {
  int num_queries = 0;
  int num_classes = 0;  // real classes; index num_classes is "no object"
  int height = 0, width = 0;
  std::vector<double> mask_logits;   // N * height * width
  std::vector<double> class_logits;  // N * (num_classes + 1)
  std::vector<double> class_probs;   // filled at inference
  std::vector<double> scores;        // rescored confidences, inference only
};

struct ScoredInstance {
  int query_index = 0;
  int class_id = 0;
  double score = 0.0;
  data::MaskGrid mask;
};

// Fuses the 1/4 backbone map with upsampled 1/8 mask features and projects
// refined queries into mask embeddings and class logits.
class MaskHead {
 public:
  MaskHead(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng,
           int backbone_c4);

  // -> [1,D,H/4,W/4]
  Tensor fuse_features(const Tensor& x_b, const Tensor& x_m_eighth);
  // queries [N,D], fused_flat [D,S] -> logits [N,S]
  Tensor predict_masks(const Tensor& queries, const Tensor& fused_flat) const;
  Tensor classify(const Tensor& queries) const;  // [N,K+1]

 private:
  nn::Conv2d f_proj_, m1_, m2_;
  nn::Linear mask_embed_, class_head_;
};

// Maskness rescoring: p_i averages sigmoid mask probabilities over pixels
// above 0.5 (0 when none), c_i is the best non-"no object" class
// probability, and the confidence is c_i * p_i. Fills class_probs + scores.
void rescore(InstancePrediction& pred);

// Drops "no object" and low-score queries, thresholds masks at 0.5, nearest-
// upsamples to (out_h, out_w) and sorts by score (ties: query index).
std::vector<ScoredInstance> postprocess(const InstancePrediction& pred,
                                        int out_h, int out_w,
                                        double score_floor);

}  // namespace iaunet
