#include "iaunet/model.hpp"

namespace iaunet {

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(Rng::mix(seed, 0x6d6f64656cULL));
  store_ = std::make_unique<nn::ParamStore>();
  encoder_ = std::make_unique<Encoder>(*store_, cfg_, rng);
  pixel_decoder_ = std::make_unique<PixelDecoder>(*store_, cfg_, rng);
  transformer_ = std::make_unique<TransformerDecoder>(*store_, cfg_, rng);
  mask_head_ = std::make_unique<MaskHead>(*store_, cfg_, rng,
                                          cfg_.encoder_channels[0]);
}

ForwardResult Model::forward(const Tensor& image, ops::BnMode mode) {
  ForwardResult r;
  r.pyramid = encoder_->encode(image, mode);
  r.levels = pixel_decoder_->decode(r.pyramid, mode);
  auto refined = transformer_->refine(r.levels, cfg_.update_order);
  r.states = std::move(refined.states);
  r.schedule = std::move(refined.schedule);
  r.final_queries = refined.final_queries;

  Tensor fused = mask_head_->fuse_features(r.pyramid.s4, r.levels.back().x_mask);
  r.h4 = fused.dim(2);
  r.w4 = fused.dim(3);
  r.fused_flat = ops::reshape(fused, {cfg_.dim, r.h4 * r.w4});
  r.final_mask_logits = mask_head_->predict_masks(r.final_queries, r.fused_flat);
  r.final_class_logits = mask_head_->classify(r.final_queries);
  return r;
}

InstancePrediction Model::predict(const Tensor& image) {
  NoGradGuard no_grad;
  ForwardResult r = forward(image, ops::BnMode::eval);
  InstancePrediction pred;
  pred.num_queries = cfg_.num_queries;
  pred.num_classes = cfg_.num_classes;
  pred.height = r.h4;
  pred.width = r.w4;
  const double* ml = r.final_mask_logits.data();
  pred.mask_logits.assign(ml, ml + r.final_mask_logits.size());
  const double* cl = r.final_class_logits.data();
  pred.class_logits.assign(cl, cl + r.final_class_logits.size());
  rescore(pred);
  return pred;
}

}  // namespace iaunet
