#pragma once

#include <string>

#include "iaunet/tensor.hpp"

namespace iaunet::ops {

// --- elementwise ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// --- reductions ---
Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

// --- shape ---
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose2d(const Tensor& a);
Tensor concat_channels(const Tensor& a, const Tensor& b);  // [N,C,H,W] axis 1
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor slice_lastdim(const Tensor& a, int start, int len);
Tensor select_row(const Tensor& a, int row);  // [R,C] -> [C]

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T -> [m,n]
// Affine map over the last axis: y = x W^T + b. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- normalization / activation over rows ---
// Stable softmax over the last axis (max subtraction). NaN input throws.
Tensor softmax_lastdim(const Tensor& a);
Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, double eps = 1e-5);

// --- convolution family, NCHW ---
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, int stride,
                        int padding);

struct BatchNormState {
  Tensor running_mean;  // non-trainable leaves, mutated by train forwards
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class BnMode { train, eval };

// Train mode normalizes with batch statistics and updates the running stats
// in place; eval mode reads them.
Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, BnMode mode);

// Half-pixel-center bilinear interpolation (align_corners=false).
Tensor bilinear_upsample2x(const Tensor& input);

Tensor global_avg_pool2d(const Tensor& input);               // [N,C,H,W]->[N,C]
Tensor scale_channels(const Tensor& x, const Tensor& gate);  // gate [N,C]

// --- losses ---
// Mean binary cross entropy in logit space (log-sum-exp stable form).
// weight, when defined, multiplies per-element terms and the mean divides by
// the weight total.
Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets,
                            const Tensor& weight = Tensor());
// Class-weighted cross entropy over rows of [N,C]; weighted mean over rows.
Tensor cross_entropy_weighted(const Tensor& logits,
                              const std::vector<int>& targets,
                              const std::vector<double>& class_weights);

namespace testing {
// Fault-injection hook: when set to an op name, that op's parameter-path
// backward is scaled to be wrong, so gradient checks must catch it.
std::string& corrupted_backward_op();
bool corrupt_active(const char* op);
}  // namespace testing

}  // namespace iaunet::ops
