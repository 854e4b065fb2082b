#include "dlglm/nn.hpp"

#include <stdexcept>

namespace dlglm::nn {

Mlp Mlp::create(ad::ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                std::size_t n_hidden, std::size_t out, Rng& rng) {
  if (in == 0 || out == 0) throw std::invalid_argument("Mlp " + prefix + ": zero width");
  if (n_hidden > 0 && hidden == 0) throw std::invalid_argument("Mlp " + prefix + ": hidden layers need width >= 1");
  Mlp mlp;
  std::size_t width = in;
  for (std::size_t i = 0; i <= n_hidden; ++i) {
    const std::size_t next = (i == n_hidden) ? out : hidden;
    const std::string name = prefix + "." + std::to_string(i);
    store.add_linear(name, width, next, rng);
    mlp.layers_.push_back({store.get(name + ".weight"), store.get(name + ".bias")});
    width = next;
  }
  return mlp;
}

Mlp Mlp::bind(const ad::ParameterStore& store, const std::string& prefix, std::size_t n_layers) {
  Mlp mlp;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    mlp.layers_.push_back({store.get(name + ".weight"), store.get(name + ".bias")});
  }
  return mlp;
}

ad::Tensor Mlp::forward(const ad::Tensor& x) const {
  if (layers_.empty()) throw std::logic_error("Mlp::forward on an empty network");
  ad::Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = ad::linear(h, layers_[i].weight, layers_[i].bias);
    if (i + 1 < layers_.size()) h = ad::relu(h);
  }
  return h;
}

}  // namespace dlglm::nn
