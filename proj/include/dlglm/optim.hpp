#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dlglm/tensor.hpp"

namespace dlglm {

using Rng = std::mt19937_64;

namespace ad {

enum class ParamRole { weight, bias, other };

struct NamedParameter {
  std::string name;
  Tensor tensor;
  ParamRole role = ParamRole::other;
  bool frozen = false;  // frozen parameters are skipped by the optimizers
};

// Insertion-ordered collection of trainable tensors. Names are unique.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor tensor, ParamRole role);
  // Registers "<layer>.weight" (semi-orthogonal) and "<layer>.bias" (zeros).
  void add_linear(const std::string& layer, std::size_t in, std::size_t out, Rng& rng);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  void set_frozen(const std::string& name, bool frozen);

  const std::vector<NamedParameter>& entries() const { return entries_; }
  std::vector<NamedParameter>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  std::vector<NamedParameter> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Kingma-Ba moment estimates, one buffer pair per parameter in store order.
struct AdamState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_store(const ParameterStore& store);
};

// Both optimizers ascend: parameters move along +gradient, since every
// objective in this library is a lower bound to be maximized.
void sgd_step(ParameterStore& params, double lr);
void adam_step(ParameterStore& params, AdamState& state, double lr);

// rows x cols matrix with orthonormal rows (rows <= cols) or orthonormal
// columns (rows > cols), from the QR factorization of N(0,1) draws with the
// diagonal of R forced positive.
Eigen::MatrixXd semi_orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace ad
}  // namespace dlglm
