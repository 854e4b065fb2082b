#pragma once

#include <string>
#include <vector>

#include "dlglm/optim.hpp"
#include "dlglm/tensor.hpp"

namespace dlglm::nn {

struct Linear {
  ad::Tensor weight;  // in x out
  ad::Tensor bias;    // 1 x out
};

// Feed-forward network: n_hidden ReLU layers of width `hidden`, then an
// affine output layer. Layers are registered in a ParameterStore as
// "<prefix>.<i>.weight" / "<prefix>.<i>.bias"; the Mlp keeps shared handles.
class Mlp {
 public:
  Mlp() = default;
  static Mlp create(ad::ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                    std::size_t n_hidden, std::size_t out, Rng& rng);
  // Rebinds to tensors already present in `store` (after deserialization).
  static Mlp bind(const ad::ParameterStore& store, const std::string& prefix, std::size_t n_layers);

  ad::Tensor forward(const ad::Tensor& x) const;

  bool empty() const { return layers_.empty(); }
  std::size_t in_width() const { return layers_.front().weight.rows(); }
  std::size_t out_width() const { return layers_.back().weight.cols(); }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
};

}  // namespace dlglm::nn
