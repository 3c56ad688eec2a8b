// SPDX-License-Identifier: Apache-2.0
/**
 * @file   tensor.hpp
 * @brief  Dense f64 tensor with reverse-mode automatic differentiation.
 *
 * A Tensor is a cheap handle onto a shared node. Operations on tensors that
 * require gradients record their parents and a backward closure; calling
 * backward() on a scalar walks that graph in reverse topological order and
 * then releases it (the tape is single-use). Leaf tensors keep their grad
 * buffers, so repeated forward/backward passes accumulate until zero_grad().
 */
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace senscal::numcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape &shape);
std::string shape_str(const Shape &shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;

  /// Lazily allocates the grad buffer.
  std::vector<double> &ensure_grad();
};

class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape &shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  /// Rows of a 2-D tensor (or length of a 1-D one).
  std::size_t rows() const;
  /// Columns of a 2-D tensor (1 for 1-D).
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  /// Direct write access; intended for initialisation and optimisers only.
  std::span<double> mutable_data() { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  double item() const;
  double at(std::size_t i, std::size_t j) const;

  /// Copy of the values with no history and no gradient tracking.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Throws ContractError otherwise.
  void backward();

  Node *node() const { return node_.get(); }
  const std::shared_ptr<Node> &node_ptr() const { return node_; }

  /// Wraps a freshly computed result. Checks finiteness and, if any parent
  /// tracks gradients (and no NoGradGuard is active), records the backward
  /// closure.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(Node &)> backward_fn,
                            const char *op_name);

private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;

  static bool active();

private:
  bool previous_;
};

} // namespace senscal::numcore
