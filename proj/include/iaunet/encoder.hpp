#pragma once

#include "iaunet/config.hpp"
#include "iaunet/nn.hpp"

namespace iaunet {

struct FeaturePyramid {
  Tensor s4, s8, s16, s32;  // strides 4/8/16/32 relative to the input
};

// Small trainable stand-in for a classification backbone: a stride-2 stem
// followed by four stages of [3x3 s2 conv, BN, ReLU, 3x3 s1 conv, BN, ReLU],
// tapped after every stage.
class Encoder {
 public:
  Encoder(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

  FeaturePyramid encode(const Tensor& image, ops::BnMode mode);

 private:
  struct ConvBn {
    nn::Conv2d conv;
    nn::BatchNorm2d bn;
  };
  Tensor run(ConvBn& block, const Tensor& x, ops::BnMode mode);

  ConvBn stem_;
  struct Stage {
    ConvBn down, keep;
  };
  std::vector<Stage> stages_;
};

}  // namespace iaunet
