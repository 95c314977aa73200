#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tbn/errors.hpp"

namespace tbn {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int64_t> strides_of(const Shape& s);

namespace detail {
template <class... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

// Thread-local gradient recording switch. Off: ops produce constant tensors
// with no parent references, so evaluation never retains a graph.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// One vertex of the reverse-mode graph. `backward_fn` reads this node's grad
// and accumulates into the grads of `parents` (only those requiring grad).
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily during backward
  bool requires_grad = false;
  bool leaf = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(const Shape& s);
  static Tensor full(const Shape& s, T v);
  static Tensor from_data(const Shape& s, std::vector<T> data);
  static Tensor scalar(T v);
  // Leaf with requires_grad set; the unit every optimizer step touches.
  static Tensor param(const Shape& s, std::vector<T> data);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return check().shape; }
  int rank() const { return static_cast<int>(check().shape.size()); }
  int64_t dim(int i) const;
  int64_t numel() const { return static_cast<int64_t>(check().value.size()); }

  std::span<const T> value() const { return check().value; }
  std::span<T> value_mut() { return check().value; }
  std::span<const T> grad() const { return check().grad; }
  std::span<T> grad_mut() { return check().grad; }
  bool has_grad() const { return !check().grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return check().requires_grad; }
  void set_requires_grad(bool on);

  // Scalar convenience.
  T item() const;

  std::shared_ptr<Node<T>> node() const { return node_; }

 private:
  Node<T>& check() const {
    if (!node_) throw ContractError("tensor is undefined");
    return *node_;
  }
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

// Records an op result. Parents and backward_fn are dropped when grad mode is
// off or no parent requires grad.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn);

// Zero-initialized grad buffer of a node, allocated on first touch.
template <typename T>
std::vector<T>& ensure_grad(Node<T>& n);

}  // namespace detail

// Elementwise with right-aligned broadcasting on the second operand: each of
// b's extents must equal a's or be 1.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, int axis);
template <typename T>
Tensor<T> reduce_sum_all(const Tensor<T>& a);
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s);

// x: (N, C_in), w: (C_out, C_in), b: (C_out) or undefined for no bias.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// (N, T, C, H, W) -> (N, C), mean over frames and pixels.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Mean cross entropy of softmax(logits) against integer labels; scalar out.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const std::vector<int>& labels);

// Per-channel batch norm on (N, T, C, H, W), channel axis 2. Training mode
// normalizes with batch statistics and updates the running buffers in place;
// eval mode uses the running buffers. gamma/beta: shape (C).
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training,
                     double momentum = 0.1, double eps = 1e-5);

// Reverse-mode sweep from a scalar loss. Leaf grads accumulate additively
// across calls until zeroed.
template <typename T>
void backward(const Tensor<T>& loss);

// N(0, sqrt(2/fan_in)) init; the seed fully determines the content.
template <typename T>
Tensor<T> he_init(const Shape& s, int64_t fan_in, uint64_t seed);
template <typename T>
Tensor<T> uniform_init(const Shape& s, T lo, T hi, uint64_t seed);

// Row-wise softmax on raw buffers (no autograd); used by eval aggregation.
template <typename T>
void softmax_rows(const T* logits, int64_t rows, int64_t cols, T* out);

}  // namespace tbn
