#include "iaunet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace iaunet::ops {

namespace testing {
std::string& corrupted_backward_op() {
  static std::string name;
  return name;
}
bool corrupt_active(const char* op) { return corrupted_backward_op() == op; }
}  // namespace testing

using detail::Node;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(msg(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                         shape_str(b.shape())));
}

void check_finite(const Tensor& t, const char* op) {
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i)
    if (std::isnan(p[i]))
      throw NumericError(msg(op, ": NaN input at flat index ", i));
}

std::int64_t rows_of(const Shape& s) {
  std::int64_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *pa = a.data(), *pb = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  return detail::make_result(
      a.shape(), std::move(out), "add", {a.node_ptr(), b.node_ptr()},
      [n](Node* node) {
        node->backward_fn = [node, n]() {
          for (auto& p : node->parents) p->accumulate(node->grad.data(), n);
        };
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *pa = a.data(), *pb = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
  return detail::make_result(
      a.shape(), std::move(out), "sub", {a.node_ptr(), b.node_ptr()},
      [n](Node* node) {
        node->backward_fn = [node, n]() {
          node->parents[0]->accumulate(node->grad.data(), n);
          Node* pb = node->parents[1].get();
          pb->ensure_grad();
          for (std::int64_t i = 0; i < n; ++i) pb->grad[i] -= node->grad[i];
        };
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *pa = a.data(), *pb = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  return detail::make_result(
      a.shape(), std::move(out), "mul", {a.node_ptr(), b.node_ptr()},
      [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          if (na->needs_grad || na->requires_grad) {
            na->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
              na->grad[i] += node->grad[i] * nb->data[i];
          }
          if (nb->needs_grad || nb->requires_grad) {
            nb->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
              nb->grad[i] += node->grad[i] * na->data[i];
          }
        };
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double *pa = a.data(), *pb = b.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] / pb[i];
  return detail::make_result(
      a.shape(), std::move(out), "div", {a.node_ptr(), b.node_ptr()},
      [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          if (na->needs_grad || na->requires_grad) {
            na->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
              na->grad[i] += node->grad[i] / nb->data[i];
          }
          if (nb->needs_grad || nb->requires_grad) {
            nb->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
              nb->grad[i] -= node->grad[i] * na->data[i] /
                             (nb->data[i] * nb->data[i]);
          }
        };
      });
}

Tensor add_scalar(const Tensor& a, double c) {
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] + c;
  return detail::make_result(a.shape(), std::move(out), "add_scalar",
                             {a.node_ptr()}, [n](Node* node) {
                               node->backward_fn = [node, n]() {
                                 node->parents[0]->accumulate(node->grad.data(),
                                                              n);
                               };
                             });
}

Tensor mul_scalar(const Tensor& a, double c) {
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] * c;
  return detail::make_result(
      a.shape(), std::move(out), "mul_scalar", {a.node_ptr()},
      [n, c](Node* node) {
        node->backward_fn = [node, n, c]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t i = 0; i < n; ++i)
            p->grad[i] += node->grad[i] * c;
        };
      });
}

Tensor relu(const Tensor& a) {
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data();
  for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] > 0.0 ? pa[i] : 0.0;
  return detail::make_result(
      a.shape(), std::move(out), "relu", {a.node_ptr()}, [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t i = 0; i < n; ++i)
            if (p->data[i] > 0.0) p->grad[i] += node->grad[i];
        };
      });
}

Tensor sigmoid(const Tensor& a) {
  const auto n = a.size();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = pa[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                      : std::exp(x) / (1.0 + std::exp(x));
  }
  return detail::make_result(
      a.shape(), std::move(out), "sigmoid", {a.node_ptr()}, [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t i = 0; i < n; ++i) {
            const double y = node->data[i];
            p->grad[i] += node->grad[i] * y * (1.0 - y);
          }
        };
      });
}

Tensor sum(const Tensor& a) {
  const auto n = a.size();
  const double* pa = a.data();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += pa[i];
  return detail::make_result(
      {}, {s}, "sum", {a.node_ptr()}, [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          const double g = node->grad[0];
          for (std::int64_t i = 0; i < n; ++i) p->grad[i] += g;
        };
      });
}

Tensor mean(const Tensor& a) {
  const auto n = a.size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  const double* pa = a.data();
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) s += pa[i];
  s /= static_cast<double>(n);
  return detail::make_result(
      {}, {s}, "mean", {a.node_ptr()}, [n](Node* node) {
        node->backward_fn = [node, n]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          const double g = node->grad[0] / static_cast<double>(n);
          for (std::int64_t i = 0; i < n; ++i) p->grad[i] += g;
        };
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError(msg("reshape: ", shape_str(a.shape()), " has ", a.size(),
                         " elements, target ", shape_str(shape), " has ",
                         numel(shape)));
  const auto n = a.size();
  std::vector<double> out(a.data(), a.data() + n);
  return detail::make_result(std::move(shape), std::move(out), "reshape",
                             {a.node_ptr()}, [n](Node* node) {
                               node->backward_fn = [node, n]() {
                                 node->parents[0]->accumulate(node->grad.data(),
                                                              n);
                               };
                             });
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d expects a rank-2 tensor");
  const int r = a.dim(0), c = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const double* pa = a.data();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::int64_t>(j) * r + i] =
          pa[static_cast<std::int64_t>(i) * c + j];
  return detail::make_result(
      {c, r}, std::move(out), "transpose2d", {a.node_ptr()},
      [r, c](Node* node) {
        node->backward_fn = [node, r, c]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              p->grad[static_cast<std::int64_t>(i) * c + j] +=
                  node->grad[static_cast<std::int64_t>(j) * r + i];
        };
      });
}

Tensor select_row(const Tensor& a, int row) {
  if (a.rank() != 2) throw ShapeError("select_row expects a rank-2 tensor");
  const int r = a.dim(0), c = a.dim(1);
  if (row < 0 || row >= r)
    throw ShapeError(msg("select_row: row ", row, " out of range ", r));
  std::vector<double> out(a.data() + static_cast<std::int64_t>(row) * c,
                          a.data() + static_cast<std::int64_t>(row + 1) * c);
  return detail::make_result(
      {c}, std::move(out), "select_row", {a.node_ptr()}, [row, c](Node* node) {
        node->backward_fn = [node, row, c]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (int j = 0; j < c; ++j)
            p->grad[static_cast<std::int64_t>(row) * c + j] += node->grad[j];
        };
      });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw ShapeError("concat_channels expects rank-4 tensors");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ShapeError(msg("concat_channels: incompatible shapes ",
                         shape_str(a.shape()), " vs ", shape_str(b.shape())));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
            w = a.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<double> out(static_cast<std::size_t>(n) * (ca + cb) * plane);
  const double *pa = a.data(), *pb = b.data();
  for (int i = 0; i < n; ++i) {
    std::copy(pa + i * ca * plane, pa + (i + 1) * ca * plane,
              out.begin() + i * (ca + cb) * plane);
    std::copy(pb + i * cb * plane, pb + (i + 1) * cb * plane,
              out.begin() + i * (ca + cb) * plane + ca * plane);
  }
  return detail::make_result(
      {n, ca + cb, h, w}, std::move(out), "concat_channels",
      {a.node_ptr(), b.node_ptr()}, [n, ca, cb, plane](Node* node) {
        node->backward_fn = [node, n, ca, cb, plane]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          const bool ga = na->needs_grad || na->requires_grad;
          const bool gb = nb->needs_grad || nb->requires_grad;
          if (ga) na->ensure_grad();
          if (gb) nb->ensure_grad();
          for (int i = 0; i < n; ++i) {
            const double* g = node->grad.data() + i * (ca + cb) * plane;
            if (ga)
              for (std::int64_t k = 0; k < ca * plane; ++k)
                na->grad[i * ca * plane + k] += g[k];
            if (gb)
              for (std::int64_t k = 0; k < cb * plane; ++k)
                nb->grad[i * cb * plane + k] += g[ca * plane + k];
          }
        };
      });
}

Tensor concat_lastdim(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw ShapeError("concat_lastdim: rank mismatch");
  for (int i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i))
      throw ShapeError(msg("concat_lastdim: leading axis ", i, " differs"));
  const std::int64_t rows = rows_of(a.shape());
  const int da = a.dim(a.rank() - 1), db = b.dim(b.rank() - 1);
  Shape out_shape = a.shape();
  out_shape.back() = da + db;
  std::vector<double> out(static_cast<std::size_t>(rows) * (da + db));
  const double *pa = a.data(), *pb = b.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::copy(pa + r * da, pa + (r + 1) * da, out.begin() + r * (da + db));
    std::copy(pb + r * db, pb + (r + 1) * db,
              out.begin() + r * (da + db) + da);
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), "concat_lastdim",
      {a.node_ptr(), b.node_ptr()}, [rows, da, db](Node* node) {
        node->backward_fn = [node, rows, da, db]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          na->ensure_grad();
          nb->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* g = node->grad.data() + r * (da + db);
            for (int k = 0; k < da; ++k) na->grad[r * da + k] += g[k];
            for (int k = 0; k < db; ++k) nb->grad[r * db + k] += g[da + k];
          }
        };
      });
}

Tensor slice_lastdim(const Tensor& a, int start, int len) {
  const int d = a.dim(a.rank() - 1);
  if (start < 0 || len <= 0 || start + len > d)
    throw ShapeError(msg("slice_lastdim: [", start, ",", start + len,
                         ") out of range for last axis ", d));
  const std::int64_t rows = rows_of(a.shape());
  Shape out_shape = a.shape();
  out_shape.back() = len;
  std::vector<double> out(static_cast<std::size_t>(rows) * len);
  const double* pa = a.data();
  for (std::int64_t r = 0; r < rows; ++r)
    std::copy(pa + r * d + start, pa + r * d + start + len,
              out.begin() + r * len);
  return detail::make_result(
      std::move(out_shape), std::move(out), "slice_lastdim", {a.node_ptr()},
      [rows, d, start, len](Node* node) {
        node->backward_fn = [node, rows, d, start, len]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r)
            for (int k = 0; k < len; ++k)
              p->grad[r * d + start + k] += node->grad[r * len + k];
        };
      });
}

namespace {

void gemm(const double* a, const double* b, double* c, std::int64_t m,
          std::int64_t k, std::int64_t n, bool accumulate) {
  // c[m,n] (+)= a[m,k] * b[k,n]
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  // c[m,n] (+)= a[m,k] * b[n,k]^T
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      if (accumulate)
        ci[j] += s;
      else
        ci[j] = s;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::int64_t m,
             std::int64_t k, std::int64_t n, bool accumulate) {
  // c[k,n] (+)= a[m,k]^T * b[m,n]
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands");
  if (a.dim(1) != b.dim(0))
    throw ShapeError(msg("matmul: inner axes differ, ", a.dim(1), " vs ",
                         b.dim(0)));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  gemm(a.data(), b.data(), out.data(), m, k, n, false);
  return detail::make_result(
      {static_cast<int>(m), static_cast<int>(n)}, std::move(out), "matmul",
      {a.node_ptr(), b.node_ptr()}, [m, k, n](Node* node) {
        node->backward_fn = [node, m, k, n]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          const bool corrupt = testing::corrupt_active("matmul");
          if (na->needs_grad || na->requires_grad) {
            na->ensure_grad();
            gemm_nt(node->grad.data(), nb->data.data(), na->grad.data(), m, n,
                    k, true);
          }
          if (nb->needs_grad || nb->requires_grad) {
            nb->ensure_grad();
            gemm_tn(na->data.data(), node->grad.data(), nb->grad.data(), m, k,
                    n, true);
            if (corrupt)
              for (auto& g : nb->grad) g *= 1.01;
          }
        };
      });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul_nt expects rank-2 operands");
  if (a.dim(1) != b.dim(1))
    throw ShapeError(msg("matmul_nt: trailing axes differ, ", a.dim(1), " vs ",
                         b.dim(1)));
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  gemm_nt(a.data(), b.data(), out.data(), m, k, n, false);
  return detail::make_result(
      {static_cast<int>(m), static_cast<int>(n)}, std::move(out), "matmul_nt",
      {a.node_ptr(), b.node_ptr()}, [m, k, n](Node* node) {
        node->backward_fn = [node, m, k, n]() {
          Node *na = node->parents[0].get(), *nb = node->parents[1].get();
          if (na->needs_grad || na->requires_grad) {
            na->ensure_grad();
            gemm(node->grad.data(), nb->data.data(), na->grad.data(), m, n, k,
                 true);
          }
          if (nb->needs_grad || nb->requires_grad) {
            nb->ensure_grad();
            gemm_tn(node->grad.data(), na->data.data(), nb->grad.data(), m, n,
                    k, true);
          }
        };
      });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be [Dout,Din]");
  const int din = weight.dim(1), dout = weight.dim(0);
  if (x.rank() < 1 || x.dim(x.rank() - 1) != din)
    throw ShapeError(msg("linear: trailing input axis ",
                         x.rank() ? x.dim(x.rank() - 1) : -1,
                         " does not match Din ", din));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != dout))
    throw ShapeError(msg("linear: bias shape ", shape_str(bias.shape()),
                         " does not match Dout ", dout));
  const std::int64_t rows = rows_of(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<double> out(static_cast<std::size_t>(rows) * dout);
  gemm_nt(x.data(), weight.data(), out.data(), rows, din, dout, false);
  if (bias.defined()) {
    const double* pb = bias.data();
    for (std::int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < dout; ++j) out[r * dout + j] += pb[j];
  }
  std::vector<std::shared_ptr<Node>> parents = {x.node_ptr(),
                                                weight.node_ptr()};
  if (bias.defined()) parents.push_back(bias.node_ptr());
  return detail::make_result(
      std::move(out_shape), std::move(out), "linear", std::move(parents),
      [rows, din, dout](Node* node) {
        node->backward_fn = [node, rows, din, dout]() {
          Node* nx = node->parents[0].get();
          Node* nw = node->parents[1].get();
          const bool corrupt = testing::corrupt_active("linear");
          if (nx->needs_grad || nx->requires_grad) {
            nx->ensure_grad();
            gemm(node->grad.data(), nw->data.data(), nx->grad.data(), rows,
                 dout, din, true);
          }
          if (nw->needs_grad || nw->requires_grad) {
            nw->ensure_grad();
            gemm_tn(node->grad.data(), nx->data.data(), nw->grad.data(), rows,
                    dout, din, true);
            if (corrupt)
              for (auto& g : nw->grad) g *= 1.01;
          }
          if (node->parents.size() > 2) {
            Node* nb = node->parents[2].get();
            nb->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
              for (int j = 0; j < dout; ++j)
                nb->grad[j] += node->grad[r * dout + j];
          }
        };
      });
}

Tensor softmax_lastdim(const Tensor& a) {
  check_finite(a, "softmax_lastdim");
  const int d = a.dim(a.rank() - 1);
  const std::int64_t rows = rows_of(a.shape());
  std::vector<double> out(static_cast<std::size_t>(rows) * d);
  const double* pa = a.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = pa + r * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < d; ++j) {
      out[r * d + j] = std::exp(row[j] - mx);
      denom += out[r * d + j];
    }
    for (int j = 0; j < d; ++j) out[r * d + j] /= denom;
  }
  return detail::make_result(
      a.shape(), std::move(out), "softmax", {a.node_ptr()},
      [rows, d](Node* node) {
        node->backward_fn = [node, rows, d]() {
          Node* p = node->parents[0].get();
          p->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* y = node->data.data() + r * d;
            const double* gy = node->grad.data() + r * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += gy[j] * y[j];
            for (int j = 0; j < d; ++j)
              p->grad[r * d + j] += y[j] * (gy[j] - dot);
          }
        };
      });
}

Tensor layernorm_lastdim(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, double eps) {
  const int d = x.dim(x.rank() - 1);
  if (gamma.size() != d || beta.size() != d)
    throw ShapeError(msg("layernorm: affine parameters must have length ", d));
  const std::int64_t rows = rows_of(x.shape());
  std::vector<double> out(static_cast<std::size_t>(rows) * d);
  std::vector<double> xhat(out.size());
  std::vector<double> inv_std(static_cast<std::size_t>(rows));
  const double *px = x.data(), *pg = gamma.data(), *pb = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* row = px + r * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * is;
      xhat[r * d + j] = xh;
      out[r * d + j] = pg[j] * xh + pb[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), "layernorm",
      {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [rows, d, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node* node) {
        node->backward_fn = [node, rows, d, xhat, inv_std]() {
          Node* nx = node->parents[0].get();
          Node* ng = node->parents[1].get();
          Node* nb = node->parents[2].get();
          const bool corrupt = testing::corrupt_active("layernorm");
          const bool want_x = nx->needs_grad || nx->requires_grad;
          if (want_x) nx->ensure_grad();
          ng->ensure_grad();
          nb->ensure_grad();
          for (std::int64_t r = 0; r < rows; ++r) {
            const double* gy = node->grad.data() + r * d;
            const double* xh = xhat.data() + r * d;
            double sum_g = 0.0, sum_gx = 0.0;
            for (int j = 0; j < d; ++j) {
              const double gg = gy[j] * ng->data[j];
              sum_g += gg;
              sum_gx += gg * xh[j];
              ng->grad[j] += gy[j] * xh[j] * (corrupt ? 1.01 : 1.0);
              nb->grad[j] += gy[j];
            }
            if (want_x) {
              const double is = inv_std[r];
              for (int j = 0; j < d; ++j) {
                const double gg = gy[j] * ng->data[j];
                nx->grad[r * d + j] +=
                    is * (gg - sum_g / d - xh[j] * sum_gx / d);
              }
            }
          }
        };
      });
}

Tensor bce_with_logits_mean(const Tensor& logits, const Tensor& targets,
                            const Tensor& weight) {
  check_same_shape(logits, targets, "bce_with_logits");
  if (weight.defined()) check_same_shape(logits, weight, "bce_with_logits");
  const auto n = logits.size();
  const double *px = logits.data(), *pt = targets.data();
  const double* pw = weight.defined() ? weight.data() : nullptr;
  double total_w = 0.0, loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = px[i], t = pt[i];
    const double w = pw ? pw[i] : 1.0;
    // max(x,0) - x t + log(1 + exp(-|x|))
    const double term =
        std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::fabs(x)));
    loss += w * term;
    total_w += w;
  }
  if (total_w <= 0.0) {
    loss = 0.0;
    total_w = 1.0;
  } else {
    loss /= total_w;
  }
  // targets (and weights) are treated as constants: copies live in the
  // closure, only the logit path gets gradient.
  std::vector<double> tcopy(pt, pt + n);
  std::vector<double> wcopy;
  if (pw) wcopy.assign(pw, pw + n);
  return detail::make_result(
      {}, {loss}, "bce_with_logits", {logits.node_ptr()},
      [n, total_w, tcopy = std::move(tcopy),
       wcopy = std::move(wcopy)](Node* node) {
        node->backward_fn = [node, n, total_w, tcopy, wcopy]() {
          Node* nx = node->parents[0].get();
          nx->ensure_grad();
          const double scale =
              testing::corrupt_active("bce_with_logits") ? 1.01 : 1.0;
          const double g = scale * node->grad[0] / total_w;
          for (std::int64_t i = 0; i < n; ++i) {
            const double x = nx->data[i];
            const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                      : std::exp(x) / (1.0 + std::exp(x));
            const double w = wcopy.empty() ? 1.0 : wcopy[i];
            nx->grad[i] += g * w * (s - tcopy[i]);
          }
        };
      });
}

Tensor cross_entropy_weighted(const Tensor& logits,
                              const std::vector<int>& targets,
                              const std::vector<double>& class_weights) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be [N,C]");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw ShapeError(msg("cross_entropy: ", targets.size(), " targets for ", n,
                         " rows"));
  if (static_cast<int>(class_weights.size()) != c)
    throw ShapeError(msg("cross_entropy: ", class_weights.size(),
                         " class weights for ", c, " classes"));
  const double* px = logits.data();
  double total_w = 0.0, loss = 0.0;
  std::vector<double> probs(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= c)
      throw ContractError(msg("cross_entropy: target ", t, " out of range ", c));
    const double* row = px + static_cast<std::int64_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const double logz = mx + std::log(denom);
    for (int j = 0; j < c; ++j)
      probs[static_cast<std::int64_t>(i) * c + j] = std::exp(row[j] - logz);
    const double w = class_weights[t];
    loss += w * (logz - row[t]);
    total_w += w;
  }
  if (total_w <= 0.0) {
    loss = 0.0;
    total_w = 1.0;
  } else {
    loss /= total_w;
  }
  return detail::make_result(
      {}, {loss}, "cross_entropy", {logits.node_ptr()},
      [n, c, total_w, targets, class_weights,
       probs = std::move(probs)](Node* node) {
        node->backward_fn = [node, n, c, total_w, targets, class_weights,
                             probs]() {
          Node* nx = node->parents[0].get();
          nx->ensure_grad();
          const double scale =
              testing::corrupt_active("cross_entropy") ? 1.01 : 1.0;
          const double g = scale * node->grad[0] / total_w;
          for (int i = 0; i < n; ++i) {
            const double w = class_weights[targets[i]];
            for (int j = 0; j < c; ++j) {
              double d = probs[static_cast<std::int64_t>(i) * c + j];
              if (j == targets[i]) d -= 1.0;
              nx->grad[static_cast<std::int64_t>(i) * c + j] += g * w * d;
            }
          }
        };
      });
}

}  // namespace iaunet::ops
