#include "lingua/autodiff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace lingua::ad {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

NodePtr new_node(Shape shape, std::vector<double> value, bool requires_grad) {
  if (element_count(shape) != value.size()) {
    throw DimensionError("value count " + std::to_string(value.size()) +
                         " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
}

Tensor::Tensor() : node_(new_node({}, {0.0}, false)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = element_count(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
  auto n = element_count(shape);
  return Tensor(new_node(std::move(shape), std::vector<double>(n, fill), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(new_node({}, {v}, requires_grad));
}

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.empty()) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  return s.empty() ? 1 : s.back();
}

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string(node_->shape));
  }
  return node_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  return Tensor(new_node(node_->shape, node_->value, false));
}

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }
NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward_fn) {
  bool track = false;
  if (grad_mode) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  auto node = new_node(std::move(shape), std::move(value), track);
  if (track) {
    node->parents.reserve(inputs.size());
    for (const auto& t : inputs) {
      if (t.node()->consumed) throw GraphError("operation on a consumed graph");
      node->parents.push_back(t.node());
    }
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& root) {
  const NodePtr& top = root.node();
  if (top->value.size() != 1) {
    throw GraphError("backward requires a scalar root, got shape " + shape_string(top->shape));
  }
  if (top->consumed) throw GraphError("graph already consumed by a previous backward pass");
  if (!top->requires_grad) throw GraphError("backward root does not depend on any tracked tensor");

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{top.get(), 0}};
  visited.insert(top.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf() && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) n->ensure_grad();
  std::fill(top->grad.begin(), top->grad.end(), 0.0);
  top->grad[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    for (auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward(*n);
  }
  for (Node* n : order) {
    n->consumed = true;
    n->backward = nullptr;
    n->parents.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
}

}  // namespace lingua::ad
