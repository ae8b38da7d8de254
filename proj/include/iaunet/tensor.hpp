#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "iaunet/errors.hpp"

namespace iaunet {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the reverse-mode tape. Owned via shared_ptr by downstream
// nodes, so a graph stays alive exactly as long as some output references it.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // true if this node or an ancestor requires grad
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;  // reads this->grad, accumulates parents
  const char* op = "leaf";

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void accumulate(const double* g, std::int64_t n);
};

bool grad_enabled();
void set_grad_enabled(bool on);

}  // namespace detail

// Value-semantic handle to a tape node. Copying shares the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int i) const;
  std::int64_t size() const;

  double* data();
  const double* data() const;
  double at(std::int64_t flat) const;
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  const std::vector<double>& grad() const;
  std::vector<double>& grad();
  void zero_grad();

  // Reverse pass from a scalar. Repeated calls accumulate into leaf grads.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables tape construction in scope (inference / oracle evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

// Builds an interior node. Parents and the backward closure are attached only
// when grad mode is on and some input needs gradients.
Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<Node>> parents,
                   const std::function<void(Node*)>& make_backward);

}  // namespace detail

}  // namespace iaunet
