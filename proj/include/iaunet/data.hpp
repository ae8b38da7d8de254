#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "iaunet/rng.hpp"
#include "iaunet/tensor.hpp"

namespace iaunet::data {

// Dense binary mask, row-major, origin top-left.
struct MaskGrid {
  int height = 0, width = 0;
  std::vector<std::uint8_t> values;

  MaskGrid() = default;
  MaskGrid(int h, int w) : height(h), width(w), values(std::size_t(h) * w, 0) {}
  std::uint8_t at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  void set(int y, int x, std::uint8_t v) {
    values[static_cast<std::size_t>(y) * width + x] = v;
  }
  std::int64_t area() const {
    std::int64_t n = 0;
    for (auto v : values) n += v ? 1 : 0;
    return n;
  }
  bool empty_mask() const { return area() == 0; }
  bool operator==(const MaskGrid&) const = default;
};

using Polygon = std::vector<std::array<double, 2>>;  // (x, y) pixel units

struct Instance {
  int class_id = 0;
  Polygon polygon;
  MaskGrid mask;
};

struct AnnotationRecord {
  std::string image_id;
  int height = 0, width = 0;
  std::vector<Instance> instances;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64, width = 64;
  int min_instances = 2, max_instances = 4;
  double min_axis = 8.0, max_axis = 14.0;  // ellipse semi-axes, pixels
  double overlap_allowance = 0.3;  // max overlapped fraction of a new mask
  double noise_level = 0.02;
  double background = 0.72;
  int num_classes = 1;  // 2 renders a nucleus inside each cell
};

struct SceneSample {
  Tensor image;  // [3,H,W], values in [0,1]
  AnnotationRecord record;
  MaskGrid validity;  // empty => fully valid (set by resizing/augmentation)
};

// Even-odd scanline fill with pixel-center in-polygon tests. Throws
// ValidationError for < 3 vertices or an empty rasterization.
MaskGrid rasterize_polygon(const Polygon& polygon, int height, int width);
double polygon_area(const Polygon& polygon);  // shoelace, absolute

// Deterministic per spec.seed: randomly rotated wobbled ellipses with smooth
// intensity falloff on a noisy low-contrast background.
SceneSample generate_scene(const SceneSpec& spec);

struct AugmentParams {
  double scale = 1.0;
  int offset_y = 0, offset_x = 0;  // crop origin in the scaled image
  bool flip_h = false, flip_v = false;
};

AugmentParams sample_augment(Rng& rng, int height, int width, int out_size);
// Scale (bilinear image / nearest masks), fixed-size crop, optional flips.
// Instances whose masks end up empty are dropped.
SceneSample apply_augment(const SceneSample& sample, const AugmentParams& p,
                          int out_size);

// Longest-side resize to `train_size` preserving aspect ratio, zero padding
// to square; padded pixels are marked invalid.
SceneSample resize_to_train(const SceneSample& sample, int train_size);

// Layout: <root>/images/<id>.ppm and <root>/annotations/<id>.json.
void save_dataset(const std::string& root,
                  const std::vector<SceneSample>& samples);
std::vector<SceneSample> load_dataset(const std::string& root);

std::vector<SceneSample> generate_dataset(const SceneSpec& base,
                                          std::uint64_t seed, int count);

}  // namespace iaunet::data
