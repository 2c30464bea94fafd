#include "andhra/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "andhra/error.hpp"

namespace andhra {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
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

std::vector<double>& detail::TensorNode::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape)
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  auto node = std::make_shared<detail::TensorNode>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from(Shape{1}, {value}, requires_grad);
}

detail::TensorNode& Tensor::checked() const {
  if (!node_) throw ContractViolation("use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return checked().shape; }

std::size_t Tensor::size(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked().data.size(); }

std::span<double> Tensor::data() { return checked().data; }
std::span<const double> Tensor::data() const { return checked().data; }

double Tensor::item() const {
  const auto& n = checked();
  if (n.data.size() != 1) throw ContractViolation("item() on non-scalar " + shape_str(n.shape));
  return n.data[0];
}

bool Tensor::requires_grad() const { return checked().requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  auto& n = checked();
  if (!n.is_leaf()) throw ContractViolation("requires_grad can only be set on leaves");
  n.requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return !checked().grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = checked();
  if (n.grad.empty()) return std::vector<double>(n.data.size(), 0.0);
  return n.grad;
}

std::span<double> Tensor::grad_span() { return checked().grad_buffer(); }

void Tensor::zero_grad() { checked().grad.clear(); }

Tensor Tensor::detach() const {
  const auto& n = checked();
  return from(n.shape, n.data, false);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values,
                           const std::vector<Tensor>& inputs,
                           std::function<void(detail::TensorNode&)> backward_fn) {
  Tensor out = from(shape, std::move(values), false);
  if (!g_grad_enabled) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  auto& node = *out.node_;
  node.requires_grad = true;
  node.parents.reserve(inputs.size());
  for (const auto& t : inputs) node.parents.push_back(t.node_);
  node.backward_fn = std::move(backward_fn);
  return out;
}

void Tensor::backward(bool retain_graph) const {
  auto& root = checked();
  if (root.data.size() != 1)
    throw ContractViolation("backward() requires a scalar, got " + shape_str(root.shape));
  if (root.released)
    throw ContractViolation("backward() through a graph that was already released");
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::TensorNode*> order;
  std::vector<std::shared_ptr<detail::TensorNode>> keep_alive;
  std::unordered_set<detail::TensorNode*> seen;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* p = node->parents[next++].get();
      if (p->released)
        throw ContractViolation("backward() through a graph that was already released");
      if (p->requires_grad && seen.insert(p).second) {
        keep_alive.push_back(node->parents[next - 1]);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->is_leaf()) continue;
    if (!node->grad.empty()) node->backward_fn(*node);
    // Interior gradients are transient; leaves keep accumulating.
    node->grad.clear();
    node->grad.shrink_to_fit();
    if (!retain_graph) {
      node->backward_fn = nullptr;
      node->parents.clear();
      node->released = true;
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace andhra
