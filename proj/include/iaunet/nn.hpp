#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "iaunet/ops.hpp"
#include "iaunet/rng.hpp"
#include "iaunet/tensor.hpp"

namespace iaunet::nn {

enum class Init { zeros, ones, kaiming_uniform, normal };

// Ordered registry of named parameters and persistent buffers. Names are
// unique; registration order defines iteration order everywhere (optimizer,
// checkpoints, gradient checks), which keeps runs reproducible.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    Shape shape;
    bool trainable = false;

    std::int64_t size() const { return numel(shape); }
    double* values() { return tensor.data(); }
    const double* values() const { return tensor.data(); }
  };

  // init_arg: stddev for normal, ignored otherwise. fan_in for kaiming is
  // the product of all non-leading axes.
  Tensor create(const std::string& name, Shape shape, Init init, Rng& rng,
                double init_arg = 1.0);

  // Non-trainable state serialized with the model (e.g. batchnorm stats).
  Tensor create_buffer(const std::string& name, Shape shape, double fill);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(const std::string& name) const;

  void zero_grads();

  std::int64_t trainable_count() const;

  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;

 private:
  void check_unique(const std::string& name);
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Checkpoint container: magic "IAUNETCK", version u32, entry count u32, then
// per entry: name length u32, name bytes, rank u32, dims u32[rank], f64
// payload. All integers and floats little-endian.
void save_checkpoint(const ParamStore& store, const std::string& path);
// Strict by name and shape; all mismatches are collected and reported in one
// error, field by field.
void load_checkpoint(ParamStore& store, const std::string& path);

// --- layer building blocks ---

struct Conv2d {
  Tensor weight, bias;
  int stride = 1, padding = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int cin, int cout, int k,
         int stride, int padding, Rng& rng, bool with_bias = true);
  Tensor forward(const Tensor& x) const {
    return ops::conv2d(x, weight, bias, stride, padding);
  }
};

struct DepthwiseConv2d {
  Tensor weight;
  int stride = 1, padding = 0;

  DepthwiseConv2d() = default;
  DepthwiseConv2d(ParamStore& ps, const std::string& name, int channels, int k,
                  int stride, int padding, Rng& rng);
  Tensor forward(const Tensor& x) const {
    return ops::depthwise_conv2d(x, weight, stride, padding);
  }
};

struct BatchNorm2d {
  Tensor gamma, beta;
  ops::BatchNormState state;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& ps, const std::string& name, int channels, Rng& rng);
  Tensor forward(const Tensor& x, ops::BnMode mode) {
    return ops::batchnorm2d(x, gamma, beta, state, mode);
  }
};

struct Linear {
  Tensor weight, bias;

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int din, int dout, Rng& rng,
         bool with_bias = true);
  Tensor forward(const Tensor& x) const {
    return ops::linear(x, weight, bias);
  }
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& name, int dim, Rng& rng);
  Tensor forward(const Tensor& x) const {
    return ops::layernorm_lastdim(x, gamma, beta);
  }
};

}  // namespace iaunet::nn
