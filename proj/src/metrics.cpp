#include "iaunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

namespace iaunet::metrics {

double mask_iou(const data::MaskGrid& a, const data::MaskGrid& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError(msg("mask_iou: ", a.height, "x", a.width, " vs ",
                         b.height, "x", b.width));
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool av = a.values[i] != 0, bv = b.values[i] != 0;
    inter += (av && bv) ? 1 : 0;
    uni += (av || bv) ? 1 : 0;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::int64_t> rle_encode(const data::MaskGrid& mask) {
  std::vector<std::int64_t> runs;
  const std::int64_t n = static_cast<std::int64_t>(mask.values.size());
  std::int64_t i = 0;
  while (i < n) {
    if (!mask.values[i]) {
      ++i;
      continue;
    }
    const std::int64_t start = i;
    while (i < n && mask.values[i]) ++i;
    runs.push_back(start);
    runs.push_back(i - start);
  }
  return runs;
}

data::MaskGrid rle_decode(const std::vector<std::int64_t>& runs, int height,
                          int width) {
  if (runs.size() % 2 != 0)
    throw ValidationError("run-length data must pair starts with lengths");
  data::MaskGrid mask(height, width);
  const std::int64_t n = static_cast<std::int64_t>(mask.values.size());
  for (std::size_t k = 0; k < runs.size(); k += 2) {
    const std::int64_t start = runs[k], len = runs[k + 1];
    if (start < 0 || len < 0 || start + len > n)
      throw ValidationError(msg("run [", start, ",", start + len,
                                ") exceeds ", n, " pixels"));
    for (std::int64_t i = start; i < start + len; ++i) mask.values[i] = 1;
  }
  return mask;
}

namespace {

constexpr int kMaxDetections = 100;
constexpr double kAreaSmall = 32.0 * 32.0;
constexpr double kAreaMedium = 96.0 * 96.0;

struct Detection {
  double score;
  int image, index;     // insertion order within the image
  bool tp = false, ignored = false;
};

struct GtEntry {
  int class_id;
  std::int64_t area;
  const data::MaskGrid* mask;
};

struct ImageSet {
  std::vector<const PredictedInstance*> dets;  // score-sorted, capped
  std::vector<GtEntry> gts;
};

// Interpolated precision averaged over the recall grid 0.01..1.00. The
// perfect detector scores exactly 1 and a single detection covering half the
// ground truth scores exactly 0.5.
double interpolated_ap(std::vector<Detection>& dets, int num_gt) {
  if (num_gt == 0) return 0.0;
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.image != b.image) return a.image < b.image;
                     return a.index < b.index;
                   });
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (const auto& d : dets) {
    if (d.ignored) continue;
    if (d.tp)
      ++tp;
    else
      ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / num_gt);
  }
  // envelope: best precision at any recall >= r
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[i] = std::max(precision[i], precision[i + 1]);
  double total = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double r = k / 100.0;
    // first point with recall >= r
    const auto it = std::lower_bound(recall.begin(), recall.end(),
                                     r - 1e-12);
    if (it != recall.end())
      total += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return total / 100.0;
}

// Matches one image's detections of one class at one threshold. Real ground
// truths are taken greedily by IoU; an otherwise-unmatched detection may
// absorb an ignored ground truth (or be ignored itself when its own area is
// outside the stratum).
void match_image(const ImageSet& img, int class_id, double threshold,
                 double area_lo, double area_hi, int image_index,
                 std::vector<Detection>& out, int& num_gt) {
  std::vector<int> gt_ids;
  std::vector<bool> gt_ignored;
  for (std::size_t g = 0; g < img.gts.size(); ++g) {
    if (img.gts[g].class_id != class_id) continue;
    gt_ids.push_back(static_cast<int>(g));
    const double a = static_cast<double>(img.gts[g].area);
    const bool ignored = a < area_lo || a >= area_hi;
    gt_ignored.push_back(ignored);
    if (!ignored) ++num_gt;
  }
  std::vector<bool> taken(gt_ids.size(), false);
  auto best_match = [&](const PredictedInstance& det, bool want_ignored) {
    int best = -1;
    double best_iou = threshold - 1e-12;
    for (std::size_t k = 0; k < gt_ids.size(); ++k) {
      if (taken[k] || gt_ignored[k] != want_ignored) continue;
      const double iou = mask_iou(det.mask, *img.gts[gt_ids[k]].mask);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(k);
      }
    }
    return best;
  };

  int det_index = 0;
  for (const auto* det : img.dets) {
    if (det->class_id != class_id) continue;
    Detection d;
    d.score = det->score;
    d.image = image_index;
    d.index = det_index++;
    int match = best_match(*det, false);  // real ground truth first
    if (match >= 0) {
      taken[match] = true;
      d.tp = true;
    } else if ((match = best_match(*det, true)) >= 0) {
      taken[match] = true;
      d.ignored = true;  // absorbed by an out-of-stratum ground truth
    } else {
      const double det_area = static_cast<double>(det->mask.area());
      if (det_area < area_lo || det_area >= area_hi) d.ignored = true;
    }
    out.push_back(d);
  }
}

double ap_over_classes(const std::vector<ImageSet>& images,
                       const std::set<int>& classes, double threshold,
                       double area_lo, double area_hi, bool& any_gt) {
  double total = 0.0;
  int counted = 0;
  for (int cls : classes) {
    std::vector<Detection> dets;
    int num_gt = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
      match_image(images[i], cls, threshold, area_lo, area_hi,
                  static_cast<int>(i), dets, num_gt);
    if (num_gt == 0) continue;
    total += interpolated_ap(dets, num_gt);
    ++counted;
  }
  any_gt = counted > 0;
  return counted > 0 ? total / counted : 0.0;
}

}  // namespace

EvalResult evaluate(const std::vector<ImagePredictions>& predictions,
                    const std::vector<const data::AnnotationRecord*>& truth) {
  if (predictions.size() != truth.size())
    throw ContractError("evaluate: prediction/truth image counts differ");

  std::vector<ImageSet> images(predictions.size());
  std::set<int> classes;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& img = images[i];
    std::vector<const PredictedInstance*> dets;
    for (const auto& d : predictions[i].instances) dets.push_back(&d);
    std::stable_sort(dets.begin(), dets.end(),
                     [](const PredictedInstance* a, const PredictedInstance* b) {
                       return a->score > b->score;
                     });
    if (static_cast<int>(dets.size()) > kMaxDetections)
      dets.resize(kMaxDetections);
    img.dets = std::move(dets);
    for (const auto& g : truth[i]->instances) {
      img.gts.push_back({g.class_id, g.mask.area(), &g.mask});
      classes.insert(g.class_id);
    }
  }

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> thresholds;
  for (int k = 0; k < 10; ++k) thresholds.push_back(0.5 + 0.05 * k);

  auto averaged = [&](const std::vector<ImageSet>& imgs, double lo, double hi,
                      bool& any) {
    double total = 0.0;
    bool seen = false;
    for (double t : thresholds) {
      bool this_any = false;
      total += ap_over_classes(imgs, classes, t, lo, hi, this_any);
      seen = seen || this_any;
    }
    any = seen;
    return total / static_cast<double>(thresholds.size());
  };

  EvalResult result;
  bool any = false;
  result.ap = averaged(images, 0.0, inf, any);
  result.has_ground_truth = any;
  bool unused = false;
  result.ap50 = ap_over_classes(images, classes, 0.50, 0.0, inf, unused);
  result.ap75 = ap_over_classes(images, classes, 0.75, 0.0, inf, unused);

  bool any_s = false, any_m = false, any_l = false;
  const double ap_s = averaged(images, 0.0, kAreaSmall, any_s);
  const double ap_m = averaged(images, kAreaSmall, kAreaMedium, any_m);
  const double ap_l = averaged(images, kAreaMedium, inf, any_l);
  if (any_s) result.ap_s = ap_s;
  if (any_m) result.ap_m = ap_m;
  if (any_l) result.ap_l = ap_l;

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    std::vector<ImageSet> one = {images[i]};
    bool any_img = false;
    const double ap_img = averaged(one, 0.0, inf, any_img);
    if (any_img)
      result.per_image[predictions[i].image_id] = ap_img;
  }
  return result;
}

std::string to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  j["ap"] = result.ap;
  j["ap50"] = result.ap50;
  j["ap75"] = result.ap75;
  j["ap_s"] = result.ap_s ? nlohmann::ordered_json(*result.ap_s)
                          : nlohmann::ordered_json(nullptr);
  j["ap_m"] = result.ap_m ? nlohmann::ordered_json(*result.ap_m)
                          : nlohmann::ordered_json(nullptr);
  j["ap_l"] = result.ap_l ? nlohmann::ordered_json(*result.ap_l)
                          : nlohmann::ordered_json(nullptr);
  j["per_image"] = nlohmann::ordered_json::object();
  for (const auto& [id, v] : result.per_image) j["per_image"][id] = v;
  return j.dump(2) + "\n";
}

}  // namespace iaunet::metrics
