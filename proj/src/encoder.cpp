#include "iaunet/encoder.hpp"

namespace iaunet {

Encoder::Encoder(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng) {
  if (cfg.encoder_channels.size() != 4)
    throw ConfigError("encoder expects exactly four stage widths");
  stem_ = {nn::Conv2d(ps, "encoder.stem.conv", 3, cfg.stem_channels, 3, 2, 1,
                      rng),
           nn::BatchNorm2d(ps, "encoder.stem.bn", cfg.stem_channels, rng)};
  int prev = cfg.stem_channels;
  for (int i = 0; i < 4; ++i) {
    const int ch = cfg.encoder_channels[i];
    const std::string base = msg("encoder.stage", i + 1);
    Stage st;
    st.down = {nn::Conv2d(ps, base + ".down.conv", prev, ch, 3, 2, 1, rng),
               nn::BatchNorm2d(ps, base + ".down.bn", ch, rng)};
    st.keep = {nn::Conv2d(ps, base + ".keep.conv", ch, ch, 3, 1, 1, rng),
               nn::BatchNorm2d(ps, base + ".keep.bn", ch, rng)};
    stages_.push_back(std::move(st));
    prev = ch;
  }
}

Tensor Encoder::run(ConvBn& block, const Tensor& x, ops::BnMode mode) {
  return ops::relu(block.bn.forward(block.conv.forward(x), mode));
}

FeaturePyramid Encoder::encode(const Tensor& image, ops::BnMode mode) {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw ShapeError(msg("encode: expected image [N,3,H,W], got ",
                         shape_str(image.shape())));
  const int h = image.dim(2), w = image.dim(3);
  if (h % 32 != 0 || w % 32 != 0)
    throw ShapeError(msg("encode: input sides must be divisible by 32, got ",
                         h, "x", w));

  Tensor x = run(stem_, image, mode);
  FeaturePyramid pyr;
  Tensor* taps[4] = {&pyr.s4, &pyr.s8, &pyr.s16, &pyr.s32};
  for (int i = 0; i < 4; ++i) {
    x = run(stages_[i].down, x, mode);
    x = run(stages_[i].keep, x, mode);
    *taps[i] = x;
  }
  return pyr;
}

}  // namespace iaunet
