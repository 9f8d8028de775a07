#pragma once

#include <cmath>
#include <map>
#include <string>

#include "cropsits/error.hpp"
#include "cropsits/models/params.hpp"

namespace cropsits::train {

using num::Tensor;

struct AdadeltaConfig {
  double rho = 0.9;
  double eps = 1e-6;

  void validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) throw ContractError("AdadeltaConfig: rho must be in [0,1)");
    if (!(eps > 0.0)) throw ContractError("AdadeltaConfig: eps must be positive");
  }
};

// Decayed accumulators of squared gradients and squared updates, one tensor
// per parameter, materialized as zeros on first use.
template <typename S>
struct AdadeltaState {
  std::map<std::string, Tensor<S>> avg_sq_grad;
  std::map<std::string, Tensor<S>> avg_sq_step;
};

// One Adadelta update over every parameter, read from the tensors' own
// gradient buffers:
//   E[g^2]  <- rho E[g^2] + (1-rho) g^2
//   dx      = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
//   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
//   x       <- x + dx
template <typename S>
void adadelta_step(models::ParameterSet<S>& params, AdadeltaState<S>& state,
                   const AdadeltaConfig& config) {
  config.validate();
  const S rho = static_cast<S>(config.rho);
  const S eps = static_cast<S>(config.eps);
  for (auto& [name, tensor] : params.tensors) {
    if (!tensor.has_grad()) continue;
    auto grad = tensor.grad();
    for (S g : grad)
      if (!std::isfinite(g))
        throw ContractError("adadelta_step: non-finite gradient in '" + name + "'");

    auto eg_it = state.avg_sq_grad.find(name);
    if (eg_it == state.avg_sq_grad.end())
      eg_it = state.avg_sq_grad.emplace(name, Tensor<S>::zeros(tensor.shape())).first;
    auto ed_it = state.avg_sq_step.find(name);
    if (ed_it == state.avg_sq_step.end())
      ed_it = state.avg_sq_step.emplace(name, Tensor<S>::zeros(tensor.shape())).first;
    auto eg = eg_it->second.data();
    auto ed = ed_it->second.data();
    auto x = tensor.data();

    for (std::size_t i = 0; i < grad.size(); ++i) {
      const S g = grad[i];
      eg[i] = rho * eg[i] + (S(1) - rho) * g * g;
      const S dx = -std::sqrt(ed[i] + eps) / std::sqrt(eg[i] + eps) * g;
      ed[i] = rho * ed[i] + (S(1) - rho) * dx * dx;
      x[i] += dx;
    }
  }
}

}  // namespace cropsits::train
