#pragma once

// Dense row-major matrix tensors with reverse-mode automatic differentiation.
//
// Every tensor is two-dimensional (rows x cols); scalars are 1x1. Operations
// record their inputs and a backward closure while gradient recording is
// enabled, and backward() on a scalar root accumulates d(root)/d(leaf) into
// every reachable tensor that requires a gradient.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlglm::ad {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  // Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Gradient recording is on by default; NoGradGuard disables it for the
// lifetime of the guard on the current thread.
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

// Populates gradients of every reachable tensor that requires one.
// Throws std::invalid_argument for a non-scalar root and std::logic_error
// if the graph contains a cycle.
void backward(const Tensor& root);

// --- operations -----------------------------------------------------------
// Binary elementwise operations broadcast the right operand when it is
// 1x1, 1xC (row vector) or Rx1 (column vector); shapes must otherwise match.

Tensor matmul(const Tensor& a, const Tensor& b);
// x * w + b with b a 1 x out row vector; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log_sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
// Values outside [lo, hi] are clipped and pass no gradient.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor sum(const Tensor& a);       // 1x1
Tensor mean(const Tensor& a);      // 1x1
Tensor row_sum(const Tensor& a);   // R x 1
Tensor log_sum_exp_rows(const Tensor& a);  // R x 1
Tensor log_softmax_rows(const Tensor& a);
Tensor softmax_rows(const Tensor& a);

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor hcat(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
// Each row repeated `times` times consecutively: (R x C) -> (R*times x C).
Tensor repeat_rows(const Tensor& a, std::size_t times);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace dlglm::ad
