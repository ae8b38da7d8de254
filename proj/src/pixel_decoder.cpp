#include "iaunet/pixel_decoder.hpp"

namespace iaunet {

PixelDecoder::PixelDecoder(nn::ParamStore& ps, const ModelConfig& cfg,
                           Rng& rng)
    : se_enabled_(cfg.se_enabled),
      coordconv_(cfg.coordconv_enabled),
      dim_(cfg.dim) {
  if (se_enabled_ && cfg.dim % cfg.se_reduction != 0)
    throw ConfigError(msg("decoder width ", cfg.dim,
                          " is not divisible by the SE reduction ",
                          cfg.se_reduction));
  // Levels run coarse to fine over the s32 / s16 / s8 skips.
  const int skip_channels[3] = {cfg.encoder_channels[3],
                                cfg.encoder_channels[2],
                                cfg.encoder_channels[1]};
  const int cat_ch = 2 * cfg.dim + (coordconv_ ? 2 : 0);
  for (int l = 0; l < 3; ++l) {
    const std::string base = msg("pixel_decoder.level", l + 1);
    proj_.emplace_back(ps, base + ".skip_proj", skip_channels[l], cfg.dim, 1,
                       1, 0, rng);
    Level lv;
    lv.gx1 = {nn::DepthwiseConv2d(ps, base + ".gx1.dw", cat_ch, 3, 1, 1, rng),
              nn::Conv2d(ps, base + ".gx1.pw", cat_ch, cfg.dim, 1, 1, 0, rng),
              nn::BatchNorm2d(ps, base + ".gx1.bn", cfg.dim, rng)};
    lv.gx2 = {nn::DepthwiseConv2d(ps, base + ".gx2.dw", cfg.dim, 3, 1, 1, rng),
              nn::Conv2d(ps, base + ".gx2.pw", cfg.dim, cfg.dim, 1, 1, 0, rng),
              nn::BatchNorm2d(ps, base + ".gx2.bn", cfg.dim, rng)};
    lv.gm1 = {nn::Conv2d(ps, base + ".gm1.conv", cfg.dim, cfg.dim, 3, 1, 1,
                         rng),
              nn::BatchNorm2d(ps, base + ".gm1.bn", cfg.dim, rng)};
    lv.gm2 = {nn::Conv2d(ps, base + ".gm2.conv", cfg.dim, cfg.dim, 3, 1, 1,
                         rng),
              nn::BatchNorm2d(ps, base + ".gm2.bn", cfg.dim, rng)};
    if (se_enabled_) {
      const int hidden = cfg.dim / cfg.se_reduction;
      lv.se_squeeze = nn::Linear(ps, base + ".se.squeeze", cfg.dim, hidden, rng);
      lv.se_expand = nn::Linear(ps, base + ".se.expand", hidden, cfg.dim, rng);
    }
    levels_.push_back(std::move(lv));
  }
}

Tensor PixelDecoder::inject_coords(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("inject_coords expects [N,C,H,W]");
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  std::vector<double> coords(static_cast<std::size_t>(n) * 2 * h * w);
  for (int b = 0; b < n; ++b) {
    double* cx = coords.data() + (static_cast<std::int64_t>(b) * 2) * h * w;
    double* cy = cx + static_cast<std::int64_t>(h) * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        // single-sample axes sit at the left endpoint of the [-1,1] span
        cx[y * w + xx] = w > 1 ? -1.0 + 2.0 * xx / (w - 1) : -1.0;
        cy[y * w + xx] = h > 1 ? -1.0 + 2.0 * y / (h - 1) : -1.0;
      }
  }
  Tensor coord_t = Tensor::from_data({n, 2, h, w}, std::move(coords));
  return ops::concat_channels(x, coord_t);
}

Tensor PixelDecoder::se_block(int level, const Tensor& x) {
  if (!se_enabled_)
    throw ContractError("se_block called with squeeze-excitation disabled");
  auto& lv = levels_.at(level);
  Tensor pooled = ops::global_avg_pool2d(x);
  Tensor gate = ops::sigmoid(
      lv.se_expand.forward(ops::relu(lv.se_squeeze.forward(pooled))));
  return ops::scale_channels(x, gate);
}

Tensor PixelDecoder::fuse_projected(int level, const Tensor& x_prev_up,
                                    const Tensor& skip_projected,
                                    ops::BnMode mode) {
  if (x_prev_up.dim(2) != skip_projected.dim(2) ||
      x_prev_up.dim(3) != skip_projected.dim(3))
    throw ShapeError(msg("fuse_skip: spatial mismatch ", x_prev_up.dim(2), "x",
                         x_prev_up.dim(3), " vs ", skip_projected.dim(2), "x",
                         skip_projected.dim(3)));
  auto& lv = levels_.at(level);
  Tensor cat = ops::concat_channels(skip_projected, x_prev_up);
  if (coordconv_) cat = inject_coords(cat);
  Tensor h = ops::relu(
      lv.gx1.bn.forward(lv.gx1.pw.forward(lv.gx1.dw.forward(cat)), mode));
  h = ops::relu(
      lv.gx2.bn.forward(lv.gx2.pw.forward(lv.gx2.dw.forward(h)), mode));
  Tensor fused = ops::add(h, x_prev_up);
  return se_enabled_ ? se_block(level, fused) : fused;
}

Tensor PixelDecoder::fuse_skip(int level, const Tensor& x_prev_up,
                               const Tensor& skip, ops::BnMode mode) {
  return fuse_projected(level, x_prev_up, proj_.at(level).forward(skip), mode);
}

Tensor PixelDecoder::update_mask_features(int level,
                                          const Tensor& x_mask_prev_up,
                                          const Tensor& x_main,
                                          ops::BnMode mode) {
  auto& lv = levels_.at(level);
  // absent previous-level mask features act as zero
  Tensor t = x_mask_prev_up.defined() ? ops::add(x_mask_prev_up, x_main)
                                      : x_main;
  t = ops::relu(lv.gm1.bn.forward(lv.gm1.conv.forward(t), mode));
  return ops::relu(lv.gm2.bn.forward(lv.gm2.conv.forward(t), mode));
}

std::vector<DecoderLevel> PixelDecoder::decode(const FeaturePyramid& pyramid,
                                               ops::BnMode mode) {
  const Tensor* skips[3] = {&pyramid.s32, &pyramid.s16, &pyramid.s8};
  std::vector<DecoderLevel> out;
  Tensor x_prev, xm_prev;
  for (int l = 0; l < 3; ++l) {
    Tensor x;
    if (l == 0) {
      // deepest level: the projected skip doubles as the previous state
      Tensor p = proj_[0].forward(*skips[0]);
      x = fuse_projected(0, p, p, mode);
    } else {
      x = fuse_skip(l, ops::bilinear_upsample2x(x_prev), *skips[l], mode);
    }
    Tensor xm = update_mask_features(
        l, l == 0 ? Tensor() : ops::bilinear_upsample2x(xm_prev), x, mode);
    out.push_back({x, xm, l + 1});
    x_prev = x;
    xm_prev = xm;
  }
  return out;
}

}  // namespace iaunet
