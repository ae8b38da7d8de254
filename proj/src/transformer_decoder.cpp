#include "iaunet/transformer_decoder.hpp"

#include <cmath>

namespace iaunet {

TransformerDecoder::TransformerDecoder(nn::ParamStore& ps,
                                       const ModelConfig& cfg, Rng& rng)
    : layers_(3),
      blocks_(cfg.blocks_per_layer),
      dim_(cfg.dim),
      heads_(cfg.num_heads) {
  if (blocks_ < 1) throw ConfigError("blocks_per_layer must be >= 1");
  if (dim_ % heads_ != 0)
    throw ConfigError(msg("query width ", dim_, " not divisible by ", heads_,
                          " heads"));
  q0_ = ps.create("transformer.queries", {cfg.num_queries, dim_},
                  nn::Init::normal, rng, 1.0);
  q_pos_ = ps.create("transformer.query_pos", {cfg.num_queries, dim_},
                     nn::Init::normal, rng, 1.0);
  cross_.resize(layers_);
  self_.resize(layers_);
  for (int l = 0; l < layers_; ++l)
    for (int b = 0; b < blocks_; ++b) {
      const std::string base = msg("transformer.layer", l + 1, ".block", b + 1);
      CrossBlock cb;
      cb.wq = nn::Linear(ps, base + ".cross.wq", dim_, dim_, rng);
      cb.wk = nn::Linear(ps, base + ".cross.wk", dim_, dim_, rng);
      cb.wv = nn::Linear(ps, base + ".cross.wv", dim_, dim_, rng);
      cb.ln = nn::LayerNorm(ps, base + ".cross.ln", dim_, rng);
      cross_[l].push_back(std::move(cb));
      SelfBlock sb;
      sb.wq = nn::Linear(ps, base + ".self.wq", dim_, dim_, rng);
      sb.wk = nn::Linear(ps, base + ".self.wk", dim_, dim_, rng);
      sb.wv = nn::Linear(ps, base + ".self.wv", dim_, dim_, rng);
      sb.ffn_in = nn::Linear(ps, base + ".ffn.in", dim_, cfg.ffn_dim, rng);
      sb.ffn_out = nn::Linear(ps, base + ".ffn.out", cfg.ffn_dim, dim_, rng);
      sb.ln_attn = nn::LayerNorm(ps, base + ".self.ln", dim_, rng);
      sb.ln_ffn = nn::LayerNorm(ps, base + ".ffn.ln", dim_, rng);
      self_[l].push_back(std::move(sb));
    }
}

Tensor TransformerDecoder::sinusoidal_pos_embed(int height, int width,
                                                int dim) {
  if (dim % 4 != 0)
    throw ConfigError(msg("positional embedding width ", dim,
                          " must be divisible by 4"));
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(height) * width * dim);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double* row = out.data() +
                    (static_cast<std::int64_t>(y) * width + x) * dim;
      for (int k = 0; k < half; ++k) {
        const double divisor =
            std::pow(10000.0, 2.0 * (k / 2) / static_cast<double>(half));
        row[k] = (k % 2 == 0) ? std::sin(y / divisor) : std::cos(y / divisor);
        row[half + k] =
            (k % 2 == 0) ? std::sin(x / divisor) : std::cos(x / divisor);
      }
    }
  return Tensor::from_data({height * width, dim}, std::move(out));
}

Tensor TransformerDecoder::attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v) const {
  const int dh = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out;
  for (int h = 0; h < heads_; ++h) {
    Tensor qh = heads_ == 1 ? q : ops::slice_lastdim(q, h * dh, dh);
    Tensor kh = heads_ == 1 ? k : ops::slice_lastdim(k, h * dh, dh);
    Tensor vh = heads_ == 1 ? v : ops::slice_lastdim(v, h * dh, dh);
    Tensor attn =
        ops::softmax_lastdim(ops::mul_scalar(ops::matmul_nt(qh, kh), scale));
    Tensor oh = ops::matmul(attn, vh);
    out = out.defined() ? ops::concat_lastdim(out, oh) : oh;
  }
  return out;
}

Tensor TransformerDecoder::cross_attention_block(int layer, int block,
                                                 const Tensor& queries,
                                                 const Tensor& source,
                                                 const Tensor& source_pos) {
  if (source.dim(0) < 1) throw ContractError("cross attention: empty source");
  auto& p = cross_.at(layer).at(block);
  Tensor q = p.wq.forward(ops::add(queries, q_pos_));
  Tensor k = p.wk.forward(ops::add(source, source_pos));
  Tensor v = p.wv.forward(source);
  Tensor attended = attention(q, k, v);
  return p.ln.forward(ops::add(attended, queries));
}

Tensor TransformerDecoder::self_attention_ffn_block(int layer, int block,
                                                    const Tensor& queries) {
  auto& p = self_.at(layer).at(block);
  Tensor with_pos = ops::add(queries, q_pos_);
  Tensor q = p.wq.forward(with_pos);
  Tensor k = p.wk.forward(with_pos);
  Tensor v = p.wv.forward(queries);
  Tensor attended = attention(q, k, v);
  Tensor y = p.ln_attn.forward(ops::add(attended, queries));
  Tensor f = p.ffn_out.forward(ops::relu(p.ffn_in.forward(y)));
  return p.ln_ffn.forward(ops::add(f, y));
}

TransformerDecoder::RefineResult TransformerDecoder::refine(
    const std::vector<DecoderLevel>& levels, UpdateOrder order) {
  if (levels.empty()) throw ContractError("refine: no decoder levels");
  if (static_cast<int>(levels.size()) != layers_)
    throw ContractError(msg("refine: expected ", layers_, " levels, got ",
                            levels.size()));

  struct Context {
    Tensor source, pos;
  };
  std::vector<Context> ctx;
  for (const auto& lv : levels) {
    const int h = lv.x_mask.dim(2), w = lv.x_mask.dim(3);
    // [1,D,H,W] -> [S,D], row-major over (H,W)
    Tensor flat =
        ops::transpose2d(ops::reshape(lv.x_mask, {dim_, h * w}));
    ctx.push_back({flat, sinusoidal_pos_embed(h, w, dim_)});
  }

  std::vector<std::pair<int, int>> schedule;
  if (order == UpdateOrder::sequential) {
    for (int l = 0; l < layers_; ++l)
      for (int b = 0; b < blocks_; ++b) schedule.emplace_back(l, b);
  } else {
    for (int b = 0; b < blocks_; ++b)
      for (int l = 0; l < layers_; ++l) schedule.emplace_back(l, b);
  }

  RefineResult result;
  Tensor q = q0_;
  for (auto [l, b] : schedule) {
    q = cross_attention_block(l, b, q, ctx[l].source, ctx[l].pos);
    q = self_attention_ffn_block(l, b, q);
    result.states.push_back(q);
  }
  result.schedule = std::move(schedule);
  result.final_queries = q;
  return result;
}

}  // namespace iaunet
