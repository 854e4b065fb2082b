#include "dlglm/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace dlglm::ad {

namespace {

thread_local bool g_grad_enabled = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

std::string shape_str(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

// Allocates the output node; wires parents only when some parent needs a
// gradient and recording is enabled.
std::shared_ptr<Node> make_node(std::size_t rows, std::size_t cols,
                                std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(rows * cols, 0.0);
  if (!g_grad_enabled) return node;
  for (const Tensor* in : inputs) {
    if (in->defined() && in->requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    for (const Tensor* in : inputs) {
      if (in->defined()) node->parents.push_back(in->node());
    }
  }
  return node;
}

enum class Bcast { same, row, col, scalar };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::same;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::col;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                              shape_str(b));
}

inline std::size_t bindex(Bcast k, std::size_t r, std::size_t c, std::size_t cols) {
  switch (k) {
    case Bcast::same: return r * cols + c;
    case Bcast::row: return c;
    case Bcast::col: return r;
    case Bcast::scalar: return 0;
  }
  return 0;
}

// Elementwise binary op. fwd(x, y) -> value; dx(x, y, out) and dy(x, y, out)
// give local partials.
template <class F, class DX, class DY>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F fwd, DX dx, DY dy) {
  const Bcast k = broadcast_kind(a, b, name);
  const std::size_t R = a.rows(), C = a.cols();
  auto node = make_node(R, C, {&a, &b});
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c)
      node->value[r * C + c] = fwd(av[r * C + c], bv[bindex(k, r, c, C)]);
  if (node->requires_grad) {
    auto an = a.node(), bn = b.node();
    node->backward_fn = [an, bn, k, R, C, dx, dy](Node& self) {
      const auto& g = self.grad;
      const auto& av = an->value;
      const auto& bv = bn->value;
      if (an->requires_grad) {
        auto& ga = an->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            ga[i] += g[i] * dx(av[i], bv[bindex(k, r, c, C)], self.value[i]);
          }
      }
      if (bn->requires_grad) {
        auto& gb = bn->ensure_grad();
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t i = r * C + c;
            const std::size_t j = bindex(k, r, c, C);
            gb[j] += g[i] * dy(av[i], bv[j], self.value[i]);
          }
      }
    };
  }
  return Tensor(node);
}

// Elementwise unary op with derivative d(x, out).
template <class F, class D>
Tensor unary(const Tensor& a, F fwd, D d) {
  auto node = make_node(a.rows(), a.cols(), {&a});
  const auto& av = a.node()->value;
  for (std::size_t i = 0; i < av.size(); ++i) node->value[i] = fwd(av[i]);
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, d](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * d(an->value[i], self.value[i]);
    };
  }
  return Tensor(node);
}

inline double stable_softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value.assign(rows * cols, 0.0);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  Tensor t = zeros(rows, cols);
  std::fill(t.node_->value.begin(), t.node_->value.end(), value);
  return t;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad) {
  if (data.size() != rows * cols) {
    throw std::invalid_argument("Tensor::from: data length " + std::to_string(data.size()) +
                                " does not match shape " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from(1, 1, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(*this));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(rows(), cols(), node_->value); }

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar tensor");
  }
  // Iterative DFS producing a post-order; grey nodes on the stack detect cycles.
  enum class Mark : unsigned char { grey, black };
  std::unordered_map<Node*, Mark> marks;
  std::vector<Node*> order;
  std::vector<std::pair<Node*, std::size_t>> stack;
  Node* start = root.node().get();
  if (!start->requires_grad) return;
  stack.emplace_back(start, 0);
  marks[start] = Mark::grey;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      auto it = marks.find(parent);
      if (it == marks.end()) {
        marks[parent] = Mark::grey;
        stack.emplace_back(parent, 0);
      } else if (it->second == Mark::grey) {
        throw std::logic_error("backward: computation graph contains a cycle");
      }
    } else {
      marks[node] = Mark::black;
      order.push_back(node);
      stack.pop_back();
    }
  }
  start->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a) + " * " + shape_str(b));
  }
  return linear(a, b, Tensor());
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows()) {
    throw std::invalid_argument("linear: input " + shape_str(x) + " vs weight " + shape_str(w));
  }
  const std::size_t R = x.rows(), I = w.rows(), O = w.cols();
  if (b.defined() && (b.rows() != 1 || b.cols() != O)) {
    throw std::invalid_argument("linear: bias must be 1x" + std::to_string(O) + ", got " + shape_str(b));
  }
  auto node = make_node(R, O, {&x, &w, &b});
  Map out(node->value.data(), R, O);
  out.noalias() = MapC(x.node()->value.data(), R, I) * MapC(w.node()->value.data(), I, O);
  if (b.defined()) out.rowwise() += MapC(b.node()->value.data(), 1, O).row(0);
  if (node->requires_grad) {
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    node->backward_fn = [xn, wn, bn, R, I, O](Node& self) {
      MapC g(self.grad.data(), R, O);
      if (xn->requires_grad) {
        Map(xn->ensure_grad().data(), R, I).noalias() += g * MapC(wn->value.data(), I, O).transpose();
      }
      if (wn->requires_grad) {
        Map(wn->ensure_grad().data(), I, O).noalias() += MapC(xn->value.data(), R, I).transpose() * g;
      }
      if (bn && bn->requires_grad) {
        Map(bn->ensure_grad().data(), 1, O).row(0) += g.colwise().sum();
      }
    };
  }
  return Tensor(node);
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor neg(const Tensor& a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double out) { return 1.0 - out * out; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, stable_sigmoid, [](double, double out) { return out * (1.0 - out); });
}

Tensor log_sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return -stable_softplus(-x); }, [](double x, double) { return stable_sigmoid(-x); });
}

Tensor softplus(const Tensor& a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  auto node = make_node(1, 1, {&a});
  double s = 0.0;
  for (double v : a.data()) s += v;
  node->value[0] = s;
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an](Node& self) {
      auto& ga = an->ensure_grad();
      for (double& g : ga) g += self.grad[0];
    };
  }
  return Tensor(node);
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor row_sum(const Tensor& a) {
  const std::size_t R = a.rows(), C = a.cols();
  auto node = make_node(R, 1, {&a});
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < R; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += av[r * C + c];
    node->value[r] = s;
  }
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, R, C](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += self.grad[r];
    };
  }
  return Tensor(node);
}

Tensor log_sum_exp_rows(const Tensor& a) {
  const std::size_t R = a.rows(), C = a.cols();
  auto node = make_node(R, 1, {&a});
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = av.data() + r * C;
    const double m = *std::max_element(row, row + C);
    if (!std::isfinite(m)) {
      node->value[r] = m;
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - m);
    node->value[r] = m + std::log(s);
  }
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, R, C](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < R; ++r) {
        const double lse = self.value[r];
        if (!std::isfinite(lse)) continue;
        for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += self.grad[r] * std::exp(an->value[r * C + c] - lse);
      }
    };
  }
  return Tensor(node);
}

Tensor log_softmax_rows(const Tensor& a) {
  const std::size_t R = a.rows(), C = a.cols();
  auto node = make_node(R, C, {&a});
  const auto& av = a.node()->value;
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = av.data() + r * C;
    const double m = *std::max_element(row, row + C);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < C; ++c) node->value[r * C + c] = row[c] - lse;
  }
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, R, C](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < R; ++r) {
        double gs = 0.0;
        for (std::size_t c = 0; c < C; ++c) gs += self.grad[r * C + c];
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = r * C + c;
          ga[i] += self.grad[i] - std::exp(self.value[i]) * gs;
        }
      }
    };
  }
  return Tensor(node);
}

Tensor softmax_rows(const Tensor& a) { return exp(log_softmax_rows(a)); }

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw std::invalid_argument("reshape: " + shape_str(a) + " cannot become " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  auto node = make_node(rows, cols, {&a});
  node->value = a.node()->value;
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    };
  }
  return Tensor(node);
}

Tensor hcat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("hcat: no inputs");
  const std::size_t R = parts.front().rows();
  std::size_t C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) throw std::invalid_argument("hcat: row counts differ");
    C += p.cols();
  }
  auto node = std::make_shared<Node>();
  node->rows = R;
  node->cols = C;
  node->value.assign(R * C, 0.0);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t pc = p.cols();
    for (std::size_t r = 0; r < R; ++r)
      std::copy_n(p.node()->value.data() + r * pc, pc, node->value.data() + r * C + off);
    off += pc;
  }
  if (grad_enabled() && std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); })) {
    node->requires_grad = true;
    std::vector<std::shared_ptr<Node>> ins;
    for (const auto& p : parts) {
      node->parents.push_back(p.node());
      ins.push_back(p.node());
    }
    node->backward_fn = [ins, R, C](Node& self) {
      std::size_t off = 0;
      for (const auto& in : ins) {
        const std::size_t pc = in->cols;
        if (in->requires_grad) {
          auto& g = in->ensure_grad();
          for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < pc; ++c) g[r * pc + c] += self.grad[r * C + off + c];
        }
        off += pc;
      }
    };
  }
  return Tensor(node);
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  const std::size_t R = a.rows(), C = a.cols();
  if (start + count > C) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") exceeds " + shape_str(a));
  }
  auto node = make_node(R, count, {&a});
  for (std::size_t r = 0; r < R; ++r)
    std::copy_n(a.node()->value.data() + r * C + start, count, node->value.data() + r * count);
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, R, C, start, count](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < count; ++c) ga[r * C + start + c] += self.grad[r * count + c];
    };
  }
  return Tensor(node);
}

Tensor repeat_rows(const Tensor& a, std::size_t times) {
  const std::size_t R = a.rows(), C = a.cols();
  auto node = make_node(R * times, C, {&a});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 0; k < times; ++k)
      std::copy_n(a.node()->value.data() + r * C, C, node->value.data() + (r * times + k) * C);
  if (node->requires_grad) {
    auto an = a.node();
    node->backward_fn = [an, R, C, times](Node& self) {
      auto& ga = an->ensure_grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t k = 0; k < times; ++k)
          for (std::size_t c = 0; c < C; ++c) ga[r * C + c] += self.grad[(r * times + k) * C + c];
    };
  }
  return Tensor(node);
}

}  // namespace dlglm::ad
