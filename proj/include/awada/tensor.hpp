#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace awada {

/// Dimensions in (batch, channel, height, width) order; at most four.
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  // Leaf holds a gradient from a backward pass that has not been reset yet.
  bool grad_pending = false;
  // Backward has already been run from this node.
  bool backward_done = false;
  // Execution order; reverse of this is a valid topological order.
  std::uint64_t seq = 0;
  std::string name;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
};

std::vector<double>& grad_buffer(Node& node);

}  // namespace detail

/// Dense 64-bit tensor with reverse-mode gradient recording.
///
/// A Tensor is a cheap handle; copies share storage. Operations never modify
/// their operands, so the recorded graph stays valid until it is dropped.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  /// Named trainable leaf with a zero-initialized gradient buffer.
  static Tensor parameter(std::string name, Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  /// Writable storage of a leaf (optimizer updates, checkpoint restore).
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  const std::string& name() const { return node_->name; }
  bool is_leaf() const { return node_->is_leaf; }

  /// Populates gradients of every reachable requires_grad tensor.
  /// Throws on non-scalar loss, on a second backward from the same loss,
  /// or when a reachable leaf still holds an unreset gradient.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
};

/// Builds an op output; the graph edge is kept only if some input needs grad.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

void zero_grad(std::span<Tensor> params);

}  // namespace awada
