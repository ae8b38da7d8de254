#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "iaunet/data.hpp"

namespace iaunet::metrics {

struct PredictedInstance {
  int class_id = 0;
  double score = 0.0;
  data::MaskGrid mask;
};

struct ImagePredictions {
  std::string image_id;
  std::vector<PredictedInstance> instances;
};

struct EvalResult {
  double ap = 0.0, ap50 = 0.0, ap75 = 0.0;
  std::optional<double> ap_s, ap_m, ap_l;  // absent when a stratum is empty
  std::map<std::string, double> per_image;
  bool has_ground_truth = false;
};

double mask_iou(const data::MaskGrid& a, const data::MaskGrid& b);

// Run-length encoding over row-major pixels as [start,len,start,len,...].
std::vector<std::int64_t> rle_encode(const data::MaskGrid& mask);
data::MaskGrid rle_decode(const std::vector<std::int64_t>& runs, int height,
                          int width);

// Greedy score-ordered matching per image and IoU threshold, PR curve over
// the pooled detections, interpolated AP averaged over the 101-point recall
// grid; thresholds 0.50:0.05:0.95, COCO size strata at 32^2 / 96^2, at most
// 100 detections per image. Classes are evaluated separately and averaged.
EvalResult evaluate(const std::vector<ImagePredictions>& predictions,
                    const std::vector<const data::AnnotationRecord*>& truth);

std::string to_json(const EvalResult& result);

}  // namespace iaunet::metrics
