#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace rvseg {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class TensorError : public std::runtime_error {
 public:
  explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

// One node of the computation graph. Also the storage cell: a "shared"
// parameter is two handles pointing at one Node, so value and gradient
// writes through either handle are visible through the other.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated lazily, only while requires_grad
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // empty for leaves

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(static_cast<std::size_t>(numel_of(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (numel_of(shape) != static_cast<std::int64_t>(data.size()))
      throw TensorError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->numel(); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const T> value() const { return node_->value; }
  std::span<T> value_mut() { return node_->value; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_->requires_grad) {
      node_->ensure_grad();
      node_->zero_grad();
    }
  }

  T item() const {
    if (numel() != 1)
      throw TensorError("item() on non-scalar tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Ordered record of the executed operations reachable from a root, with
// producers placed before consumers.
template <typename T>
struct Tape {
  std::vector<Node<T>*> order;

  static Tape record(const Tensor<T>& root) {
    Tape tape;
    if (!root.defined() || !root.node()->requires_grad) return tape;
    std::unordered_set<const Node<T>*> visited;
    // iterative post-order DFS
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node<T>* p = node->parents[idx++].get();
        if (p->requires_grad && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        tape.order.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }
};

// Reverse-mode accumulation from a scalar root. Gradients of every
// requires_grad ancestor are += accumulated, so repeated paths (and repeated
// backward calls without zeroing) sum.
template <typename T>
void backward(const Tensor<T>& root) {
  if (!root.defined()) throw TensorError("backward on undefined tensor");
  if (root.numel() != 1)
    throw TensorError("backward requires a scalar root, got shape " +
                      shape_str(root.shape()));
  if (!root.node()->requires_grad)
    throw TensorError("backward root does not require grad (no taped ancestors)");
  Tape<T> tape = Tape<T>::record(root);
  for (Node<T>* n : tape.order) n->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = tape.order.rbegin(); it != tape.order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> make_node(Shape shape, const char* op) {
  auto n = std::make_shared<Node<T>>();
  n->value.resize(static_cast<std::size_t>(numel_of(shape)));
  n->shape = std::move(shape);
  n->op = op;
  return n;
}

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> ts) {
  for (const Tensor<T>* t : ts)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

}  // namespace detail

template <typename T>
bool all_finite(std::span<const T> xs) {
  for (T x : xs)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& context) {
  if (!all_finite(t.value()))
    throw TensorError("non-finite value in " + context);
}

}  // namespace rvseg
