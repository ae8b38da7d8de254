#include <algorithm>
#include <cmath>

#include "iaunet/ops.hpp"

namespace iaunet::ops {

using detail::Node;

namespace {

struct ConvGeom {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, padding;
  int oh, ow;
};

// Floor-division output extent (standard cross-correlation semantics; strided
// kernels may leave a partial remainder at the far edge).
int out_extent(int in, int k, int s, int p, const char* axis) {
  const int span = in + 2 * p - k;
  if (span < 0)
    throw ShapeError(msg("conv2d: kernel exceeds padded input on ", axis,
                         " axis (", in, "+2*", p, " < ", k, ")"));
  return span / s + 1;
}

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, int stride,
                       int padding, bool depthwise) {
  if (input.rank() != 4)
    throw ShapeError(msg("conv2d: input must be [N,C,H,W], got ",
                         shape_str(input.shape())));
  if (weight.rank() != 4)
    throw ShapeError(msg("conv2d: weight must be rank 4, got ",
                         shape_str(weight.shape())));
  ConvGeom g;
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.padding = padding;
  if (g.kh % 2 == 0 || g.kw % 2 == 0)
    throw ShapeError(msg("conv2d: kernel extents must be odd, got ", g.kh, "x",
                         g.kw));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (depthwise) {
    if (weight.dim(0) != g.cin || weight.dim(1) != 1)
      throw ShapeError(msg("depthwise_conv2d: weight channel axis ",
                           weight.dim(0), "x", weight.dim(1),
                           " does not match input channels ", g.cin));
    g.cout = g.cin;
  } else {
    if (weight.dim(1) != g.cin)
      throw ShapeError(msg("conv2d: weight input-channel axis ", weight.dim(1),
                           " does not match input channels ", g.cin));
    g.cout = weight.dim(0);
  }
  g.oh = out_extent(g.h, g.kh, stride, padding, "height");
  g.ow = out_extent(g.w, g.kw, stride, padding, "width");
  return g;
}

// Valid output range [lo,hi) so that in = o*s + k - p stays inside [0,extent).
inline void tap_range(int extent, int out_extent_, int k, int s, int p,
                      int& lo, int& hi) {
  const int a = p - k;
  lo = a <= 0 ? 0 : (a + s - 1) / s;
  const int b = extent - 1 + p - k;
  hi = b < 0 ? 0 : std::min(out_extent_, b / s + 1);
  lo = std::min(lo, hi);
}

// out[oy,ox] += wv * in[oy*s+ky-p, ox*s+kx-p] over the valid window.
void accumulate_plane(const double* in, double* out, double wv,
                      const ConvGeom& g, int ky, int kx) {
  int oy_lo, oy_hi, ox_lo, ox_hi;
  tap_range(g.h, g.oh, ky, g.stride, g.padding, oy_lo, oy_hi);
  tap_range(g.w, g.ow, kx, g.stride, g.padding, ox_lo, ox_hi);
  for (int oy = oy_lo; oy < oy_hi; ++oy) {
    const int iy = oy * g.stride + ky - g.padding;
    const double* in_row = in + static_cast<std::int64_t>(iy) * g.w;
    double* out_row = out + static_cast<std::int64_t>(oy) * g.ow;
    const int base = kx - g.padding;
    if (g.stride == 1) {
      for (int ox = ox_lo; ox < ox_hi; ++ox)
        out_row[ox] += wv * in_row[ox + base];
    } else {
      for (int ox = ox_lo; ox < ox_hi; ++ox)
        out_row[ox] += wv * in_row[ox * g.stride + base];
    }
  }
}

// Scatter form: in_grad[iy,ix] += wv * out_grad[oy,ox].
void scatter_plane(double* in_grad, const double* out_grad, double wv,
                   const ConvGeom& g, int ky, int kx) {
  int oy_lo, oy_hi, ox_lo, ox_hi;
  tap_range(g.h, g.oh, ky, g.stride, g.padding, oy_lo, oy_hi);
  tap_range(g.w, g.ow, kx, g.stride, g.padding, ox_lo, ox_hi);
  for (int oy = oy_lo; oy < oy_hi; ++oy) {
    const int iy = oy * g.stride + ky - g.padding;
    double* in_row = in_grad + static_cast<std::int64_t>(iy) * g.w;
    const double* out_row = out_grad + static_cast<std::int64_t>(oy) * g.ow;
    const int base = kx - g.padding;
    for (int ox = ox_lo; ox < ox_hi; ++ox)
      in_row[ox * g.stride + base] += wv * out_row[ox];
  }
}

// dW tap: sum of out_grad[oy,ox] * in[iy,ix] over the valid window.
double correlate_plane(const double* in, const double* out_grad,
                       const ConvGeom& g, int ky, int kx) {
  int oy_lo, oy_hi, ox_lo, ox_hi;
  tap_range(g.h, g.oh, ky, g.stride, g.padding, oy_lo, oy_hi);
  tap_range(g.w, g.ow, kx, g.stride, g.padding, ox_lo, ox_hi);
  double s = 0.0;
  for (int oy = oy_lo; oy < oy_hi; ++oy) {
    const int iy = oy * g.stride + ky - g.padding;
    const double* in_row = in + static_cast<std::int64_t>(iy) * g.w;
    const double* out_row = out_grad + static_cast<std::int64_t>(oy) * g.ow;
    const int base = kx - g.padding;
    for (int ox = ox_lo; ox < ox_hi; ++ox)
      s += out_row[ox] * in_row[ox * g.stride + base];
  }
  return s;
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  const ConvGeom g = conv_geometry(input, weight, stride, padding, false);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout))
    throw ShapeError(msg("conv2d: bias length ", bias.size(),
                         " does not match output channels ", g.cout));
  const std::int64_t in_plane = static_cast<std::int64_t>(g.h) * g.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(g.oh) * g.ow;
  std::vector<double> out(static_cast<std::size_t>(g.n) * g.cout * out_plane,
                          0.0);
  const double* pin = input.data();
  const double* pw = weight.data();
  for (int n = 0; n < g.n; ++n)
    for (int k = 0; k < g.cout; ++k) {
      double* out_p = out.data() + (static_cast<std::int64_t>(n) * g.cout + k) *
                                       out_plane;
      if (bias.defined()) {
        const double b = bias.data()[k];
        for (std::int64_t i = 0; i < out_plane; ++i) out_p[i] = b;
      }
      for (int c = 0; c < g.cin; ++c) {
        const double* in_p =
            pin + (static_cast<std::int64_t>(n) * g.cin + c) * in_plane;
        const double* w_p =
            pw + (static_cast<std::int64_t>(k) * g.cin + c) * g.kh * g.kw;
        for (int ky = 0; ky < g.kh; ++ky)
          for (int kx = 0; kx < g.kw; ++kx)
            accumulate_plane(in_p, out_p, w_p[ky * g.kw + kx], g, ky, kx);
      }
    }
  std::vector<std::shared_ptr<Node>> parents = {input.node_ptr(),
                                                weight.node_ptr()};
  if (bias.defined()) parents.push_back(bias.node_ptr());
  return detail::make_result(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), "conv2d", std::move(parents),
      [g, in_plane, out_plane](Node* node) {
        node->backward_fn = [node, g, in_plane, out_plane]() {
          Node* nin = node->parents[0].get();
          Node* nw = node->parents[1].get();
          Node* nb = node->parents.size() > 2 ? node->parents[2].get() : nullptr;
          const bool want_in = nin->needs_grad || nin->requires_grad;
          const bool corrupt = testing::corrupt_active("conv2d");
          if (want_in) nin->ensure_grad();
          nw->ensure_grad();
          if (nb) nb->ensure_grad();
          for (int n = 0; n < g.n; ++n)
            for (int k = 0; k < g.cout; ++k) {
              const double* gout =
                  node->grad.data() +
                  (static_cast<std::int64_t>(n) * g.cout + k) * out_plane;
              if (nb) {
                double s = 0.0;
                for (std::int64_t i = 0; i < out_plane; ++i) s += gout[i];
                nb->grad[k] += s;
              }
              for (int c = 0; c < g.cin; ++c) {
                const std::int64_t in_off =
                    (static_cast<std::int64_t>(n) * g.cin + c) * in_plane;
                const std::int64_t w_off =
                    (static_cast<std::int64_t>(k) * g.cin + c) * g.kh * g.kw;
                for (int ky = 0; ky < g.kh; ++ky)
                  for (int kx = 0; kx < g.kw; ++kx) {
                    const double wtap =
                        correlate_plane(nin->data.data() + in_off, gout, g, ky,
                                        kx);
                    nw->grad[w_off + ky * g.kw + kx] +=
                        corrupt ? 1.01 * wtap : wtap;
                    if (want_in)
                      scatter_plane(nin->grad.data() + in_off, gout,
                                    nw->data[w_off + ky * g.kw + kx], g, ky,
                                    kx);
                  }
              }
            }
        };
      });
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, int stride,
                        int padding) {
  const ConvGeom g = conv_geometry(input, weight, stride, padding, true);
  const std::int64_t in_plane = static_cast<std::int64_t>(g.h) * g.w;
  const std::int64_t out_plane = static_cast<std::int64_t>(g.oh) * g.ow;
  std::vector<double> out(static_cast<std::size_t>(g.n) * g.cin * out_plane,
                          0.0);
  const double* pin = input.data();
  const double* pw = weight.data();
  for (int n = 0; n < g.n; ++n)
    for (int c = 0; c < g.cin; ++c) {
      const double* in_p =
          pin + (static_cast<std::int64_t>(n) * g.cin + c) * in_plane;
      double* out_p =
          out.data() + (static_cast<std::int64_t>(n) * g.cin + c) * out_plane;
      const double* w_p = pw + static_cast<std::int64_t>(c) * g.kh * g.kw;
      for (int ky = 0; ky < g.kh; ++ky)
        for (int kx = 0; kx < g.kw; ++kx)
          accumulate_plane(in_p, out_p, w_p[ky * g.kw + kx], g, ky, kx);
    }
  return detail::make_result(
      {g.n, g.cin, g.oh, g.ow}, std::move(out), "depthwise_conv2d",
      {input.node_ptr(), weight.node_ptr()},
      [g, in_plane, out_plane](Node* node) {
        node->backward_fn = [node, g, in_plane, out_plane]() {
          Node* nin = node->parents[0].get();
          Node* nw = node->parents[1].get();
          const bool want_in = nin->needs_grad || nin->requires_grad;
          const bool corrupt = testing::corrupt_active("depthwise_conv2d");
          if (want_in) nin->ensure_grad();
          nw->ensure_grad();
          for (int n = 0; n < g.n; ++n)
            for (int c = 0; c < g.cin; ++c) {
              const double* gout =
                  node->grad.data() +
                  (static_cast<std::int64_t>(n) * g.cin + c) * out_plane;
              const std::int64_t in_off =
                  (static_cast<std::int64_t>(n) * g.cin + c) * in_plane;
              const std::int64_t w_off =
                  static_cast<std::int64_t>(c) * g.kh * g.kw;
              for (int ky = 0; ky < g.kh; ++ky)
                for (int kx = 0; kx < g.kw; ++kx) {
                  const double wtap = correlate_plane(nin->data.data() + in_off,
                                                      gout, g, ky, kx);
                  nw->grad[w_off + ky * g.kw + kx] +=
                      corrupt ? 1.01 * wtap : wtap;
                  if (want_in)
                    scatter_plane(nin->grad.data() + in_off, gout,
                                  nw->data[w_off + ky * g.kw + kx], g, ky, kx);
                }
            }
        };
      });
}

Tensor batchnorm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, BnMode mode) {
  if (input.rank() != 4)
    throw ShapeError(msg("batchnorm2d: input must be [N,C,H,W], got ",
                         shape_str(input.shape())));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  if (gamma.size() != c || beta.size() != c)
    throw ShapeError(msg("batchnorm2d: affine parameters must have length ", c));
  if (!state.running_mean.defined() || !state.running_var.defined() ||
      state.running_mean.size() != c || state.running_var.size() != c)
    throw ShapeError(msg("batchnorm2d: running stats length does not match ", c,
                         " channels"));
  if (mode == BnMode::train && n < 1)
    throw ContractError("batchnorm2d: train mode requires batch size >= 1");

  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(n) * plane;
  const double* px = input.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();

  std::vector<double> mean_c(c), inv_std_c(c);
  double* rm = state.running_mean.data();
  double* rv = state.running_var.data();
  if (mode == BnMode::train) {
    for (int ch = 0; ch < c; ++ch) {
      double mu = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = px + (static_cast<std::int64_t>(b) * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) mu += p[i];
      }
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* p = px + (static_cast<std::int64_t>(b) * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i)
          var += (p[i] - mu) * (p[i] - mu);
      }
      var /= static_cast<double>(m);
      mean_c[ch] = mu;
      inv_std_c[ch] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased =
          m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1)
                : var;
      rm[ch] = (1.0 - state.momentum) * rm[ch] + state.momentum * mu;
      rv[ch] = (1.0 - state.momentum) * rv[ch] + state.momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean_c[ch] = rm[ch];
      inv_std_c[ch] = 1.0 / std::sqrt(rv[ch] + state.eps);
    }
  }

  std::vector<double> out(static_cast<std::size_t>(n) * c * plane);
  std::vector<double> xhat(out.size());
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::int64_t off = (static_cast<std::int64_t>(b) * c + ch) * plane;
      const double mu = mean_c[ch], is = inv_std_c[ch];
      for (std::int64_t i = 0; i < plane; ++i) {
        const double xh = (px[off + i] - mu) * is;
        xhat[off + i] = xh;
        out[off + i] = pg[ch] * xh + pb[ch];
      }
    }

  const bool train = mode == BnMode::train;
  return detail::make_result(
      input.shape(), std::move(out), "batchnorm2d",
      {input.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [n, c, plane, m, train, xhat = std::move(xhat),
       inv_std_c = std::move(inv_std_c)](Node* node) {
        node->backward_fn = [node, n, c, plane, m, train, xhat, inv_std_c]() {
          Node* nx = node->parents[0].get();
          Node* ng = node->parents[1].get();
          Node* nb = node->parents[2].get();
          const bool want_x = nx->needs_grad || nx->requires_grad;
          const bool corrupt = testing::corrupt_active("batchnorm2d");
          if (want_x) nx->ensure_grad();
          ng->ensure_grad();
          nb->ensure_grad();
          for (int ch = 0; ch < c; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int b = 0; b < n; ++b) {
              const std::int64_t off =
                  (static_cast<std::int64_t>(b) * c + ch) * plane;
              for (std::int64_t i = 0; i < plane; ++i) {
                sum_g += node->grad[off + i];
                sum_gx += node->grad[off + i] * xhat[off + i];
              }
            }
            ng->grad[ch] += corrupt ? 1.01 * sum_gx : sum_gx;
            nb->grad[ch] += sum_g;
            if (!want_x) continue;
            const double gam = ng->data[ch];
            const double is = inv_std_c[ch];
            if (train) {
              const double inv_m = 1.0 / static_cast<double>(m);
              for (int b = 0; b < n; ++b) {
                const std::int64_t off =
                    (static_cast<std::int64_t>(b) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                  nx->grad[off + i] +=
                      gam * is *
                      (node->grad[off + i] - inv_m * sum_g -
                       xhat[off + i] * inv_m * sum_gx);
                }
              }
            } else {
              for (int b = 0; b < n; ++b) {
                const std::int64_t off =
                    (static_cast<std::int64_t>(b) * c + ch) * plane;
                for (std::int64_t i = 0; i < plane; ++i)
                  nx->grad[off + i] += gam * is * node->grad[off + i];
              }
            }
          }
        };
      });
}

namespace {

struct LerpTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;  // weight of the hi tap
};

// Half-pixel mapping: src = (dst + 0.5)/2 - 0.5, taps clamped at borders.
LerpTaps upsample_taps(int in_extent) {
  LerpTaps t;
  const int out = in_extent * 2;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    const double src = (o + 0.5) / 2.0 - 0.5;
    double f = std::floor(src);
    int lo = static_cast<int>(f);
    double frac = src - f;
    int hi = lo + 1;
    if (lo < 0) {
      lo = 0;
      hi = 0;
      frac = 0.0;
    }
    if (hi > in_extent - 1) {
      hi = in_extent - 1;
      if (lo > in_extent - 1) lo = in_extent - 1;
      if (lo == hi) frac = 0.0;
    }
    t.lo[o] = lo;
    t.hi[o] = hi;
    t.frac[o] = frac;
  }
  return t;
}

}  // namespace

Tensor bilinear_upsample2x(const Tensor& input) {
  if (input.rank() != 4)
    throw ShapeError(msg("bilinear_upsample2x: input must be [N,C,H,W], got ",
                         shape_str(input.shape())));
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2),
            w = input.dim(3);
  if (h < 1 || w < 1) throw ShapeError("bilinear_upsample2x: empty input");
  const int oh = 2 * h, ow = 2 * w;
  const LerpTaps ty = upsample_taps(h);
  const LerpTaps tx = upsample_taps(w);
  const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t out_plane = static_cast<std::int64_t>(oh) * ow;
  std::vector<double> out(static_cast<std::size_t>(n) * c * out_plane);
  const double* pin = input.data();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
    const double* ip = pin + pc * in_plane;
    double* op = out.data() + pc * out_plane;
    for (int oy = 0; oy < oh; ++oy) {
      const double fy = ty.frac[oy];
      const double* row_lo = ip + static_cast<std::int64_t>(ty.lo[oy]) * w;
      const double* row_hi = ip + static_cast<std::int64_t>(ty.hi[oy]) * w;
      for (int ox = 0; ox < ow; ++ox) {
        const double fx = tx.frac[ox];
        const double v_lo =
            row_lo[tx.lo[ox]] * (1.0 - fx) + row_lo[tx.hi[ox]] * fx;
        const double v_hi =
            row_hi[tx.lo[ox]] * (1.0 - fx) + row_hi[tx.hi[ox]] * fx;
        op[static_cast<std::int64_t>(oy) * ow + ox] =
            v_lo * (1.0 - fy) + v_hi * fy;
      }
    }
  }
  return detail::make_result(
      {n, c, oh, ow}, std::move(out), "bilinear_upsample2x",
      {input.node_ptr()},
      [n, c, w, oh, ow, in_plane, out_plane, ty, tx](Node* node) {
        node->backward_fn = [node, n, c, w, oh, ow, in_plane, out_plane, ty,
                             tx]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c;
               ++pc) {
            double* ig = p->grad.data() + pc * in_plane;
            const double* og = node->grad.data() + pc * out_plane;
            for (int oy = 0; oy < oh; ++oy) {
              const double fy = ty.frac[oy];
              for (int ox = 0; ox < ow; ++ox) {
                const double g = og[static_cast<std::int64_t>(oy) * ow + ox];
                const double fx = tx.frac[ox];
                ig[ty.lo[oy] * w + tx.lo[ox]] += g * (1.0 - fy) * (1.0 - fx);
                ig[ty.lo[oy] * w + tx.hi[ox]] += g * (1.0 - fy) * fx;
                ig[ty.hi[oy] * w + tx.lo[ox]] += g * fy * (1.0 - fx);
                ig[ty.hi[oy] * w + tx.hi[ox]] += g * fy * fx;
              }
            }
          }
        };
      });
}

Tensor global_avg_pool2d(const Tensor& input) {
  if (input.rank() != 4)
    throw ShapeError("global_avg_pool2d: input must be [N,C,H,W]");
  const int n = input.dim(0), c = input.dim(1);
  const std::int64_t plane =
      static_cast<std::int64_t>(input.dim(2)) * input.dim(3);
  std::vector<double> out(static_cast<std::size_t>(n) * c);
  const double* pin = input.data();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
    double s = 0.0;
    const double* p = pin + pc * plane;
    for (std::int64_t i = 0; i < plane; ++i) s += p[i];
    out[pc] = s / static_cast<double>(plane);
  }
  return detail::make_result(
      {n, c}, std::move(out), "global_avg_pool2d", {input.node_ptr()},
      [n, c, plane](Node* node) {
        node->backward_fn = [node, n, c, plane]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c;
               ++pc) {
            const double g = node->grad[pc] / static_cast<double>(plane);
            double* ig = p->grad.data() + pc * plane;
            for (std::int64_t i = 0; i < plane; ++i) ig[i] += g;
          }
        };
      });
}

Tensor scale_channels(const Tensor& x, const Tensor& gate) {
  if (x.rank() != 4 || gate.rank() != 2)
    throw ShapeError("scale_channels: expects x [N,C,H,W] and gate [N,C]");
  if (gate.dim(0) != x.dim(0) || gate.dim(1) != x.dim(1))
    throw ShapeError(msg("scale_channels: gate ", shape_str(gate.shape()),
                         " does not match ", shape_str(x.shape())));
  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  const double* px = x.data();
  const double* pg = gate.data();
  for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c; ++pc) {
    const double gv = pg[pc];
    const double* ip = px + pc * plane;
    double* op = out.data() + pc * plane;
    for (std::int64_t i = 0; i < plane; ++i) op[i] = ip[i] * gv;
  }
  return detail::make_result(
      x.shape(), std::move(out), "scale_channels",
      {x.node_ptr(), gate.node_ptr()}, [n, c, plane](Node* node) {
        node->backward_fn = [node, n, c, plane]() {
          Node* nx = node->parents[0].get();
          Node* ng = node->parents[1].get();
          const bool want_x = nx->needs_grad || nx->requires_grad;
          const bool want_g = ng->needs_grad || ng->requires_grad;
          if (want_x) nx->ensure_grad();
          if (want_g) ng->ensure_grad();
          for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(n) * c;
               ++pc) {
            const double* og = node->grad.data() + pc * plane;
            if (want_x) {
              const double gv = ng->data[pc];
              double* ig = nx->grad.data() + pc * plane;
              for (std::int64_t i = 0; i < plane; ++i) ig[i] += og[i] * gv;
            }
            if (want_g) {
              const double* ip = nx->data.data() + pc * plane;
              double s = 0.0;
              for (std::int64_t i = 0; i < plane; ++i) s += og[i] * ip[i];
              ng->grad[pc] += s;
            }
          }
        };
      });
}

}  // namespace iaunet::ops
