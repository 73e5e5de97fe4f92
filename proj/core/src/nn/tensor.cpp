#include "magniflow/nn/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "magniflow/errors.hpp"

namespace magniflow::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d >= 0, "negative tensor extent");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::vector<Real>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), Real{0});
  return grad;
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, Real{0}); }

Tensor Tensor::full(const Shape& shape, Real value) {
  return from(shape, std::vector<Real>(nn::numel(shape), value));
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> values) {
  require(values.size() == nn::numel(shape), "Tensor::from: " + std::to_string(values.size()) +
                                             " values for shape " + to_string(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::parameter(const Shape& shape, std::vector<Real> values) {
  auto t = from(shape, std::move(values));
  t.node_->requires_grad = true;
  return t;
}

Real Tensor::item() const {
  require(numel() == 1, "Tensor::item: tensor is not a scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::clone() const {
  auto t = from(shape(), node_->value);
  t.node_->requires_grad = node_->requires_grad && !node_->backward;
  return t;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<Real> value, std::vector<Tensor> inputs, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  require(node->value.size() == numel(node->shape), "make_result: value size does not match shape");
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || (t.defined() && t.requires_grad());
    if (any) {
      node->requires_grad = true;
      for (auto& t : inputs) {
        if (t.defined()) node->parents.push_back(t.node());
      }
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  require(root.defined() && root.numel() == 1, "backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), Real{0});
  }
  root.node()->grad_buffer()[0] += Real{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

}  // namespace magniflow::nn
