// SPDX-License-Identifier: Apache-2.0
#include "senscal/numcore/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "senscal/error.hpp"

namespace senscal::numcore {

namespace {
thread_local bool g_no_grad = false;
} // namespace

std::size_t shape_size(const Shape &shape) {
  std::size_t n = 1;
  for (auto d : shape)
    n *= d;
  return n;
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<double> &Node::ensure_grad() {
  if (grad.size() != data.size())
    grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_size(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  for (auto d : shape)
    if (d == 0)
      throw DimensionError("tensor extents must be positive, got " +
                           shape_str(shape));
  if (shape_size(shape) != values.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_size(shape)) +
                         " values, got " + std::to_string(values.size()));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad)
    node->ensure_grad();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
  return node_->shape.empty() ? 1 : node_->shape[0];
}

std::size_t Tensor::cols() const {
  return node_->shape.size() < 2 ? 1 : node_->shape[1];
}

void Tensor::zero_grad() {
  if (node_->requires_grad)
    node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return node_->data[i * cols() + j];
}

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents,
                           std::function<void(Node &)> backward_fn,
                           const char *op_name) {
  for (double v : values)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value produced by ") +
                         op_name);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool track = false;
  if (!g_no_grad)
    for (const auto &p : parents)
      track = track || p.requires_grad();
  if (track) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (auto &p : parents)
      node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void Tensor::backward() {
  if (!node_)
    throw ContractError("backward() on undefined tensor");
  if (size() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " +
                        shape_str(shape()));
  if (!node_->requires_grad)
    throw ContractError("backward() on a tensor that tracks no gradients");

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  std::vector<std::pair<Node *, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto &[node, next] = stack.back();
    if (next < node->parents.size()) {
      Node *parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second)
        stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (!n->is_leaf && n->backward_fn)
      n->backward_fn(*n);
  }
  for (Node *n : order) {
    if (n->is_leaf)
      continue;
    n->parents.clear();
    n->backward_fn = nullptr;
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = previous_; }
bool NoGradGuard::active() { return g_no_grad; }

} // namespace senscal::numcore
