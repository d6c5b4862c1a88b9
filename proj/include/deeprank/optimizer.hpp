#pragma once

#include <span>
#include <vector>

#include "deeprank/tensor.hpp"

namespace deeprank {

struct SgdConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

template <typename T>
struct OptState {
  SgdConfig hyper;
  std::vector<Tensor<T>> velocity;  // mirrors the parameter list
};

template <typename T>
OptState<T> make_opt_state(std::span<const Tensor<T>> params, const SgdConfig& hyper);

/// v <- momentum*v - lr*(grad + weight_decay*param); param <- param + v.
/// Weight decay applies to every parameter, biases included.
template <typename T>
void sgd_momentum_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, OptState<T>& state);

}  // namespace deeprank
