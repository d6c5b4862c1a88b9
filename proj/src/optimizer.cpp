#include "deeprank/optimizer.hpp"

#include <string>

namespace deeprank {

template <typename T>
OptState<T> make_opt_state(std::span<const Tensor<T>> params, const SgdConfig& hyper) {
  if (hyper.learning_rate < 0 || hyper.momentum < 0 || hyper.weight_decay < 0) {
    throw std::invalid_argument("sgd: learning_rate, momentum and weight_decay must be non-negative");
  }
  OptState<T> state{hyper, {}};
  state.velocity.reserve(params.size());
  for (const auto& p : params) state.velocity.emplace_back(p.shape());
  return state;
}

template <typename T>
void sgd_momentum_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads, OptState<T>& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw ShapeError("sgd_momentum_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(state.velocity.size()) +
                     " velocities");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].shape(), grads[i].shape(), "sgd_momentum_step gradient");
    require_same_shape(params[i].shape(), state.velocity[i].shape(), "sgd_momentum_step velocity");
  }
  const T lr = static_cast<T>(state.hyper.learning_rate);
  const T mu = static_cast<T>(state.hyper.momentum);
  const T wd = static_cast<T>(state.hyper.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].data();
    const T* g = grads[i].data();
    T* v = state.velocity[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      v[j] = mu * v[j] - lr * (g[j] + wd * p[j]);
      p[j] += v[j];
    }
  }
}

template OptState<float> make_opt_state(std::span<const Tensor<float>>, const SgdConfig&);
template OptState<double> make_opt_state(std::span<const Tensor<double>>, const SgdConfig&);
template void sgd_momentum_step(std::span<Tensor<float>>, std::span<const Tensor<float>>, OptState<float>&);
template void sgd_momentum_step(std::span<Tensor<double>>, std::span<const Tensor<double>>, OptState<double>&);

}  // namespace deeprank
