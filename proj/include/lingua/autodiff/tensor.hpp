#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lingua::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the recorded computation. Leaves hold parameters or inputs;
// interior nodes carry a backward closure that reads `grad` and accumulates
// into the parents' grads.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;
  std::uint64_t id = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  void ensure_grad();
};

class Tensor {
 public:
  Tensor();
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }
  // Rows/cols view a tensor as [product of leading dims x last dim].
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  std::uint64_t id() const { return node_->id; }
  const NodePtr& node() const { return node_; }

  // Detached copy of the values; never part of any graph.
  Tensor clone() const;

 private:
  NodePtr node_;
};

// Gradient recording is on by default; the guard disables it for the current
// thread, which makes forward passes side-effect free on shared parameters.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Building block for operations. When any input requires grad (and recording
// is enabled) the result is an interior node owning `backward`; otherwise the
// closure is dropped and the result is a plain constant.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);

// Reverse pass from a scalar root. Leaf grads accumulate; the graph is
// released afterwards and cannot be replayed.
void backward(const Tensor& root);

}  // namespace lingua::ad
