#include "dlglm/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dlglm::ad {

Tensor ParameterStore::add(const std::string& name, Tensor tensor, ParamRole role) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!tensor.requires_grad()) tensor = Tensor::from(tensor.rows(), tensor.cols(),
                                                     std::vector<double>(tensor.data().begin(), tensor.data().end()),
                                                     true);
  index_[name] = entries_.size();
  entries_.push_back({name, std::move(tensor), role, false});
  return entries_.back().tensor;
}

void ParameterStore::add_linear(const std::string& layer, std::size_t in, std::size_t out, Rng& rng) {
  Eigen::MatrixXd w = semi_orthogonal_init(in, out, rng);
  std::vector<double> flat(in * out);
  for (std::size_t r = 0; r < in; ++r)
    for (std::size_t c = 0; c < out; ++c) flat[r * out + c] = w(r, c);
  add(layer + ".weight", Tensor::from(in, out, std::move(flat), true), ParamRole::weight);
  add(layer + ".bias", Tensor::zeros(1, out, true), ParamRole::bias);
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].tensor;
}

void ParameterStore::set_frozen(const std::string& name, bool frozen) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  entries_[it->second].frozen = frozen;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<std::vector<double>> ParameterStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void ParameterStore::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_data();
    if (values[i].size() != dst.size()) {
      throw std::invalid_argument("restore: size mismatch for " + entries_[i].name);
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

AdamState AdamState::for_store(const ParameterStore& store) {
  AdamState s;
  for (const auto& e : store.entries()) {
    s.m.emplace_back(e.tensor.size(), 0.0);
    s.v.emplace_back(e.tensor.size(), 0.0);
  }
  return s;
}

void sgd_step(ParameterStore& params, double lr) {
  for (auto& e : params.entries()) {
    if (e.frozen) continue;
    if (!e.tensor.has_grad()) throw std::logic_error("sgd_step: no gradient for " + e.name);
  }
  for (auto& e : params.entries()) {
    if (e.frozen) continue;
    auto p = e.tensor.mutable_data();
    auto g = e.tensor.grad();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += lr * g[i];
  }
}

void adam_step(ParameterStore& params, AdamState& state, double lr) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " parameters, store has " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (state.m[i].size() != entries[i].tensor.size() || state.v[i].size() != entries[i].tensor.size()) {
      throw std::invalid_argument("adam_step: moment shape mismatch for " + entries[i].name);
    }
    if (!entries[i].frozen && !entries[i].tensor.has_grad()) {
      throw std::logic_error("adam_step: no gradient for " + entries[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].frozen) continue;
    auto p = entries[i].tensor.mutable_data();
    auto g = entries[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] += lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

Eigen::MatrixXd semi_orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("semi_orthogonal_init: dimensions must be >= 1");
  const Eigen::Index tall = static_cast<Eigen::Index>(std::max(rows, cols));
  const Eigen::Index thin = static_cast<Eigen::Index>(std::min(rows, cols));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(tall, thin);
  for (Eigen::Index r = 0; r < tall; ++r)
    for (Eigen::Index c = 0; c < thin; ++c) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (Eigen::Index c = 0; c < thin; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  if (rows < cols) return q.transpose();
  return q;
}

}  // namespace dlglm::ad
