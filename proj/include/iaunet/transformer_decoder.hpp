#pragma once

#include <utility>
#include <vector>

#include "iaunet/pixel_decoder.hpp"

namespace iaunet {

// Refines N learnable queries against flattened mask features, three
// Transformer blocks per decoder layer. Every post-block query state is
// recorded for deep supervision.
class TransformerDecoder {
 public:
  TransformerDecoder(nn::ParamStore& ps, const ModelConfig& cfg, Rng& rng);

  struct RefineResult {
    Tensor final_queries;
    std::vector<Tensor> states;                  // one per visited block
    std::vector<std::pair<int, int>> schedule;   // (layer, block) per state
  };

  RefineResult refine(const std::vector<DecoderLevel>& levels,
                      UpdateOrder order);

  // DETR-style 2-D sine embedding over integer grid positions; the first
  // half of the channels encodes y, the second half x.
  static Tensor sinusoidal_pos_embed(int height, int width, int dim);

  Tensor cross_attention_block(int layer, int block, const Tensor& queries,
                               const Tensor& source, const Tensor& source_pos);
  Tensor self_attention_ffn_block(int layer, int block, const Tensor& queries);

  Tensor initial_queries() const { return q0_; }
  Tensor query_pos() const { return q_pos_; }
  int layer_count() const { return layers_; }
  int blocks_per_layer() const { return blocks_; }

 private:
  struct CrossBlock {
    nn::Linear wq, wk, wv;
    nn::LayerNorm ln;
  };
  struct SelfBlock {
    nn::Linear wq, wk, wv, ffn_in, ffn_out;
    nn::LayerNorm ln_attn, ln_ffn;
  };

  Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) const;

  int layers_ = 3;
  int blocks_ = 3;
  int dim_ = 0;
  int heads_ = 1;
  std::vector<std::vector<CrossBlock>> cross_;
  std::vector<std::vector<SelfBlock>> self_;
  Tensor q0_, q_pos_;
};

}  // namespace iaunet
