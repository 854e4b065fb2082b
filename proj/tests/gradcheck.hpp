#pragma once

// Central finite-difference checking for scalar-valued tensor functions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dlglm/tensor.hpp"

namespace gradcheck {

using dlglm::ad::Tensor;
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

// Relative error with an absolute floor: differences below abs_floor count as 0.
inline double rel_error(double analytic, double numeric, double abs_floor = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return 0.0;
  return diff / std::max(std::abs(analytic), std::abs(numeric));
}

// Largest relative error over every input entry, gradients from backward()
// against (f(x+h) - f(x-h)) / 2h.
inline double max_relative_error(const Fn& f, std::vector<Tensor>& inputs, double h = 1e-5,
                                 double abs_floor = 1e-7) {
  for (auto& t : inputs) t.zero_grad();
  dlglm::ad::backward(f(inputs));
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  double worst = 0.0;
  dlglm::ad::NoGradGuard guard;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto data = inputs[i].mutable_data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + h;
      const double fp = f(inputs).item();
      data[j] = orig - h;
      const double fm = f(inputs).item();
      data[j] = orig;
      worst = std::max(worst, rel_error(analytic[i][j], (fp - fm) / (2 * h), abs_floor));
    }
  }
  return worst;
}

struct RandomGraph {
  Fn f;
  std::vector<Tensor> inputs;
};

// A small MLP with smooth activations and a random scalar reduction:
// 1-3 layers, widths 1-16, batch 1-4.
inline RandomGraph random_graph(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> layers_d(1, 3), width_d(1, 16), batch_d(1, 4), act_d(0, 3);
  std::normal_distribution<double> n01;
  const int n_layers = layers_d(rng);
  const std::size_t batch = static_cast<std::size_t>(batch_d(rng));
  std::vector<std::size_t> widths{static_cast<std::size_t>(width_d(rng))};
  for (int l = 0; l < n_layers; ++l) widths.push_back(static_cast<std::size_t>(width_d(rng)));

  auto rand = [&](std::size_t r, std::size_t c, double s) {
    std::vector<double> v(r * c);
    for (auto& e : v) e = s * n01(rng);
    return Tensor::from(r, c, v, true);
  };
  RandomGraph g;
  g.inputs.push_back(rand(batch, widths[0], 1.0));
  std::vector<int> acts;
  for (int l = 0; l < n_layers; ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    g.inputs.push_back(rand(widths[l], widths[l + 1], s));
    g.inputs.push_back(rand(1, widths[l + 1], 0.5));
    acts.push_back(act_d(rng));
  }
  const int reduction = act_d(rng) % 2;
  g.f = [n_layers, acts, reduction](const std::vector<Tensor>& in) {
    using namespace dlglm::ad;
    Tensor h = in[0];
    for (int l = 0; l < n_layers; ++l) {
      h = linear(h, in[1 + 2 * l], in[2 + 2 * l]);
      switch (acts[l]) {
        case 0: h = tanh(h); break;
        case 1: h = sigmoid(h); break;
        case 2: h = softplus(h); break;
        default: h = log_softmax_rows(h); break;
      }
    }
    return reduction == 0 ? sum(square(h)) : sum(log_sum_exp_rows(h));
  };
  return g;
}

}  // namespace gradcheck
