#include "awada/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace awada {

namespace {

std::atomic<std::uint64_t> g_sequence{0};

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
  if (shape.size() > 4) {
    throw std::invalid_argument("tensor rank " + std::to_string(shape.size()) + " exceeds 4");
  }
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->seq = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& grad_buffer(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::parameter(std::string name, Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values), true);
  t.node_->name = std::move(name);
  t.node_->grad.assign(t.numel(), 0.0);
  return t;
}

int Tensor::dim(int axis) const {
  if (axis < 0 || axis >= ndim()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " invalid for shape " +
                            shape_str(shape()));
  }
  return node_->shape[axis];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf) throw std::logic_error("mutable_values on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

void Tensor::set_requires_grad(bool on) {
  if (!node_->is_leaf) throw std::logic_error("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = on;
  if (on) {
    detail::grad_buffer(*node_);
  } else {
    node_->grad.clear();
    node_->grad_pending = false;
  }
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  node_->grad_pending = false;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(shape()));
  }
  if (node_->backward_done) {
    throw std::logic_error("backward already run on this loss; rebuild the graph");
  }
  if (!node_->requires_grad) {
    node_->backward_done = true;
    return;
  }

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }

  for (detail::Node* n : order) {
    if (n->is_leaf && n->grad_pending) {
      throw std::logic_error("gradient of '" + n->name +
                             "' was not reset since the last backward; call zero_grad");
    }
  }

  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->seq > b->seq; });

  for (detail::Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  detail::grad_buffer(*node_)[0] += 1.0;

  for (detail::Node* n : order) {
    if (n->backward) n->backward(*n);
  }
  for (detail::Node* n : order) {
    if (n->is_leaf) n->grad_pending = true;
  }
  node_->backward_done = true;
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  Tensor out(new_node(std::move(shape), std::move(values)));
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->is_leaf = false;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace awada
