#pragma once

#include <memory>

#include "iaunet/mask_head.hpp"

namespace iaunet {

struct ForwardResult {
  FeaturePyramid pyramid;
  std::vector<DecoderLevel> levels;
  std::vector<Tensor> states;                 // post-block query states
  std::vector<std::pair<int, int>> schedule;  // (layer, block) per state
  Tensor fused_flat;                          // [D, S4]
  int h4 = 0, w4 = 0;
  Tensor final_queries;
  Tensor final_mask_logits;   // [N, S4]
  Tensor final_class_logits;  // [N, K+1]
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ForwardResult forward(const Tensor& image, ops::BnMode mode);

  InstancePrediction predict(const Tensor& image);  // eval mode + rescore

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return *store_; }
  MaskHead& mask_head() { return *mask_head_; }
  TransformerDecoder& transformer() { return *transformer_; }
  PixelDecoder& pixel_decoder() { return *pixel_decoder_; }
  Encoder& encoder() { return *encoder_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<nn::ParamStore> store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<PixelDecoder> pixel_decoder_;
  std::unique_ptr<TransformerDecoder> transformer_;
  std::unique_ptr<MaskHead> mask_head_;
};

}  // namespace iaunet
