#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace magniflow::nn {

#ifdef MAGNIFLOW_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;
// Reads the output node's gradient and accumulates into its parents.
using BackwardFn = std::function<void(Node& out)>;

struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;

  // Zero-initialises the gradient buffer on first use.
  std::vector<Real>& grad_buffer();
};

// Shared handle to a node of the computation graph. Copies alias the same
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, Real value);
  static Tensor from(const Shape& shape, std::vector<Real> values);
  // Leaf tensor that accumulates gradients.
  static Tensor parameter(const Shape& shape, std::vector<Real> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const Real> data() const { return node_->value; }
  std::span<Real> mutable_data() { return node_->value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }
  bool requires_grad() const { return node_->requires_grad; }

  Real item() const;
  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Disables graph recording on this thread while alive (inference, sampling).
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

// Builds an op result. The backward closure is kept only when recording is
// enabled and some input requires a gradient.
Tensor make_result(Shape shape, std::vector<Real> value, std::vector<Tensor> inputs, BackwardFn backward);

// Reverse-mode sweep from a scalar root. Leaf gradients accumulate across
// calls; intermediate gradients are reset at the start of every sweep.
void backward(const Tensor& root);

}  // namespace magniflow::nn
