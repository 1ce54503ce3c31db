#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mafn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void op_error(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

// Thread-local switch controlling whether ops record backward rules.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  NoGradGuard() : prev_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// One value in the computation graph. `parents` and `backprop` are populated
// only while grad recording is on and some input requires grad.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched; then same size as value
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

// Value-semantic handle onto a graph node. Copies share the node.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape s) { return full(std::move(s), T(0)); }
  static Tensor ones(Shape s) { return full(std::move(s), T(1)); }

  static Tensor full(Shape s, T v) {
    auto n = std::make_shared<TensorNode<T>>();
    n->value.assign(size_t(shape_numel(s)), v);
    n->shape = std::move(s);
    return Tensor(n);
  }

  static Tensor from_data(Shape s, std::vector<T> v) {
    if (int64_t(v.size()) != shape_numel(s))
      throw std::invalid_argument("Tensor::from_data: shape " + shape_str(s) +
                                  " does not match " + std::to_string(v.size()) +
                                  " values");
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(s);
    n->value = std::move(v);
    return Tensor(n);
  }

  bool defined() const { return bool(n_); }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return int(n_->shape.size()); }
  int dim(int i) const { return n_->shape[i < 0 ? n_->shape.size() + i : size_t(i)]; }
  int64_t size() const { return int64_t(n_->value.size()); }

  std::vector<T>& data() { return n_->value; }
  const std::vector<T>& data() const { return n_->value; }

  T item() const {
    if (size() != 1) op_error("item", "tensor is not scalar, shape " + shape_str(shape()));
    return n_->value[0];
  }

  // flat index helpers
  T at(int i) const { return n_->value[size_t(i)]; }
  T at(int i, int j) const { return n_->value[size_t(i) * n_->shape[1] + j]; }
  T at(int i, int j, int k) const {
    return n_->value[(size_t(i) * n_->shape[1] + j) * n_->shape[2] + k];
  }
  T at(int i, int j, int k, int l) const {
    return n_->value[((size_t(i) * n_->shape[1] + j) * size_t(n_->shape[2]) + k) *
                         size_t(n_->shape[3]) +
                     l];
  }

  Tensor& set_requires_grad(bool b) {
    n_->requires_grad = b;
    return *this;
  }
  bool requires_grad() const { return n_->requires_grad; }

  std::vector<T>& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const std::vector<T>& grad() const { return n_->grad; }
  bool has_grad() const { return !n_->grad.empty(); }
  void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

  const char* op_name() const { return n_->op; }
  std::shared_ptr<TensorNode<T>> node() const { return n_; }

 private:
  std::shared_ptr<TensorNode<T>> n_;
};

// Every forward result passes through here: finiteness is enforced, and the
// backward rule is wired up only when recording is on and needed.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  const std::vector<Tensor<T>>& inputs,
                  std::function<void(TensorNode<T>&)> backprop) {
  if (int64_t(value.size()) != shape_numel(shape))
    op_error(op, "internal shape/value mismatch");
  for (T v : value) {
    if (!std::isfinite(double(v)))
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
  }
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  if (grad_mode()) {
    bool track = false;
    for (const auto& in : inputs) track = track || in.requires_grad();
    if (track) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (const auto& in : inputs) n->parents.push_back(in.node());
      n->backprop = std::move(backprop);
    }
  }
  return Tensor<T>(n);
}

// Reverse-mode sweep from a scalar root: reverse topological order, each node
// visited exactly once, gradients accumulating additively across fan-out.
template <typename T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, shape " +
                                shape_str(root.shape()));
  if (!root.requires_grad())
    throw std::invalid_argument("backward: root does not require grad");

  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  visited.insert(root.node().get());
  stack.emplace_back(root.node().get(), 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      TensorNode<T>* p = top.first->parents[top.second++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  root.node()->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace mafn
