#include "iaunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace iaunet {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

void Node::accumulate(const double* g, std::int64_t n) {
  ensure_grad();
  for (std::int64_t i = 0; i < n; ++i) grad[i] += g[i];
}

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<std::shared_ptr<Node>> parents,
                   const std::function<void(Node*)>& make_backward) {
  auto node = std::make_shared<Node>();
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ContractError(msg("result of ", op, ": data length ", data.size(),
                            " does not match shape ", shape_str(shape)));
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;

  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p && (p->requires_grad || p->needs_grad)) needs = true;
  }
  if (needs) {
    node->needs_grad = true;
    node->parents = std::move(parents);
    make_backward(node.get());
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace detail

Tensor Tensor::wrap(std::shared_ptr<detail::Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel(shape);
  if (n < 0) throw ShapeError(msg("negative extent in shape ", shape_str(shape)));
  std::vector<double> data(static_cast<std::size_t>(n), value);
  return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ShapeError(msg("data length ", data.size(), " does not match shape ",
                         shape_str(shape)));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->needs_grad = requires_grad;
  return wrap(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("shape() on an undefined tensor");
  return node_->shape;
}

int Tensor::dim(int i) const {
  const auto& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw ShapeError(msg("axis ", i, " out of range for shape ", shape_str(s)));
  return s[i];
}

std::int64_t Tensor::size() const {
  if (!node_) return 0;
  return node_->size();
}

double* Tensor::data() {
  if (!node_) throw ContractError("data() on an undefined tensor");
  return node_->data.data();
}

const double* Tensor::data() const {
  if (!node_) throw ContractError("data() on an undefined tensor");
  return node_->data.data();
}

double Tensor::at(std::int64_t flat) const {
  if (flat < 0 || flat >= size())
    throw ShapeError(msg("flat index ", flat, " out of range ", size()));
  return node_->data[static_cast<std::size_t>(flat)];
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError(msg("item() requires a scalar, got shape ",
                            shape_str(shape())));
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_) throw ContractError("set_requires_grad on undefined tensor");
  node_->requires_grad = on;
  node_->needs_grad = on || !node_->parents.empty();
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->data.size();
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad())
    throw ContractError("grad() before backward populated this tensor");
  return node_->grad;
}

std::vector<double>& Tensor::grad() {
  if (!node_) throw ContractError("grad() on undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty())
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward() on undefined tensor");
  if (size() != 1)
    throw ContractError(msg("backward() requires a scalar loss, got shape ",
                            shape_str(shape())));
  if (!std::isfinite(node_->data[0]))
    throw NumericError("backward() on a non-finite loss value");

  // Iterative post-order DFS over nodes that participate in the grad graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  struct Frame {
    detail::Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  if (node_->needs_grad || node_->requires_grad) {
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node* p = f.node->parents[f.next_parent++].get();
      if (p && (p->needs_grad || p->requires_grad) && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are per-call accumulators; only leaf grads persist across
  // repeated backward() calls.
  for (detail::Node* n : order)
    if (!n->parents.empty() && !n->grad.empty())
      std::fill(n->grad.begin(), n->grad.end(), 0.0);

  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn();
  }
}

NoGradGuard::NoGradGuard() : prev_(detail::grad_enabled()) {
  detail::set_grad_enabled(false);
}

NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(prev_); }

}  // namespace iaunet
