#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace andhra {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the reverse-mode graph. Leaves have no backward_fn. Interior
// nodes hold their inputs alive through `parents` and whatever the backward
// closure captured; dropping the last handle to the loss frees the graph.
struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(TensorNode&)> backward_fn;
  bool released = false;  // interior node whose graph was already consumed

  bool is_leaf() const { return !backward_fn; }
  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

// Dense row-major tensor of doubles taking part in a dynamically recorded
// computation graph. Copies are shallow handles to the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  // Accumulated gradient; zeros of the right shape if none arrived yet.
  std::vector<double> grad() const;
  std::span<double> grad_span();
  void zero_grad();

  // Reverse pass from a scalar. Leaf gradients accumulate across calls.
  // Without retain_graph the closures along the way are released.
  void backward(bool retain_graph = false) const;

  // New leaf sharing no storage or history with this tensor.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Low-level hook used by the op implementations. The graph edge is only
  // recorded when grad mode is on and some input requires grad; backward_fn
  // then sees the inputs as node.parents in the given order.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& inputs,
                            std::function<void(detail::TensorNode&)> backward_fn);
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  detail::TensorNode& checked() const;

  std::shared_ptr<detail::TensorNode> node_;
};

// While alive, newly created op results record no graph (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace andhra
