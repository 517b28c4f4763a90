#include "confnet2seq/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "confnet2seq/errors.hpp"

namespace confnet2seq::num {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Node::~Node() {
  std::vector<std::shared_ptr<Node>> pending = std::move(parents);
  while (!pending.empty()) {
    std::shared_ptr<Node> node = std::move(pending.back());
    pending.pop_back();
    // Sole owner: adopt its parents so its destructor finds none.
    if (node.use_count() == 1) {
      for (auto& p : node->parents) pending.push_back(std::move(p));
      node->parents.clear();
      node->backward = nullptr;
    }
  }
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  if (shape_size(shape) != count)
    throw ShapeError("shape " + shape_string(shape) + " does not hold " + std::to_string(count) + " values");
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape, values.size());
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(double value) { return make_leaf({1}, {value}, false); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return make_leaf({n}, std::move(values), false);
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return make_leaf(std::move(shape), std::move(values), true);
}

Tensor Tensor::uniform(Shape shape, double range, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-range, range);
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = dist(rng);
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

std::span<const double> Tensor::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

namespace {
thread_local bool no_grad_active = false;
}

NoGradGuard::NoGradGuard() : previous_(no_grad_active) { no_grad_active = true; }
NoGradGuard::~NoGradGuard() { no_grad_active = previous_; }
bool NoGradGuard::active() { return no_grad_active; }

Tape Tape::record(const Tensor& root) {
  Tape tape;
  tape.root_ = root.node_ptr();
  if (!root.requires_grad()) return tape;
  // Iterative post-order DFS; decoder graphs are deep enough that recursion
  // depth would track sequence length times layer count.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(tape.root_.get(), 0);
  visited.insert(tape.root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      tape.order_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void backward(const Tensor& loss) { backward(loss, Tape::record(loss)); }

void backward(const Tensor& loss, const Tape& tape) {
  if (loss.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;
  // Interior gradients are per-pass; leaves keep accumulating.
  for (Node* node : tape.nodes()) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  Node& root = loss.node();
  root.ensure_grad();
  root.grad[0] += 1.0;
  const auto& order = tape.nodes();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward) continue;
    for (auto& parent : node->parents)
      if (parent->requires_grad) parent->ensure_grad();
    node->backward(*node);
  }
}

}  // namespace confnet2seq::num
