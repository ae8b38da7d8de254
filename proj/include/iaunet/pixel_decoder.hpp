#pragma once

#include <vector>

#include "iaunet/encoder.hpp"

namespace iaunet {

struct DecoderLevel {
  Tensor x_main;  // X
  Tensor x_mask;  // X_m
  int level = 0;  // 1 = coarsest (1/32)
};

// Convolutional decoder over the 1/32 -> 1/16 -> 1/8 levels. Per level the
// projected skip is concatenated with the upscaled decoder state (plus
// coordinate channels when enabled), refined by two depthwise+pointwise
// blocks, added back residually and gated by squeeze-excitation; the mask
// branch adds the result into its own two-conv refinement.
class PixelDecoder {
 public:
  PixelDecoder(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

  std::vector<DecoderLevel> decode(const FeaturePyramid& pyramid,
                                   ops::BnMode mode);

  // Appends normalized x/y coordinate channels in [-1,1]. A single-sample
  // axis maps to -1.
  static Tensor inject_coords(const Tensor& x);

  Tensor se_block(int level, const Tensor& x);
  Tensor fuse_skip(int level, const Tensor& x_prev_up, const Tensor& skip,
                   ops::BnMode mode);
  // x_mask_prev_up may be undefined at the deepest level.
  Tensor update_mask_features(int level, const Tensor& x_mask_prev_up,
                              const Tensor& x_main, ops::BnMode mode);

  int levels() const { return static_cast<int>(proj_.size()); }

 private:
  Tensor fuse_projected(int level, const Tensor& x_prev_up,
                        const Tensor& skip_projected, ops::BnMode mode);

  struct GxBlock {
    nn::DepthwiseConv2d dw;
    nn::Conv2d pw;
    nn::BatchNorm2d bn;
  };
  struct GmBlock {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
  };
  struct Level {
    GxBlock gx1, gx2;
    GmBlock gm1, gm2;
    nn::Linear se_squeeze, se_expand;
  };

  std::vector<nn::Conv2d> proj_;  // 1x1 skip projections, coarse to fine
  std::vector<Level> levels_;
  bool se_enabled_ = true;
  bool coordconv_ = true;
  int dim_ = 0;
};

}  // namespace iaunet
