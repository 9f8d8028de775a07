#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "cropsits/error.hpp"
#include "cropsits/numcore/tensor.hpp"
#include "cropsits/rng.hpp"

namespace cropsits::models {

using num::Index;
using num::Shape;
using num::Tensor;

// Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in). For a
// convolution kernel fan_in is Cin*kh*kw; for an affine layer it is the
// input width.
template <typename S>
Tensor<S> kaiming_uniform(const Shape& shape, Index fan_in, Rng& rng) {
  if (fan_in <= 0) throw ContractError("kaiming_uniform: fan_in must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor<S>::uniform(shape, rng, static_cast<S>(-bound), static_cast<S>(bound));
}

// Named parameter store. Tensors are shallow handles, so the same set can be
// walked by a forward pass, an optimizer, and a checkpoint writer; all of
// them see the same storage and gradient buffers. Iteration order is the
// sorted name order, which is also the serialization order.
template <typename S>
struct ParameterSet;

namespace detail {

template <typename S>
void add_conv(ParameterSet<S>& params, const std::string& name, Index out_ch, Index in_ch,
              Index k, std::uint64_t seed) {
  Rng rng(mix_seed(seed, hash64(name)));
  params.add(name, kaiming_uniform<S>({out_ch, in_ch, k, k}, in_ch * k * k, rng));
}

template <typename S>
void add_affine(ParameterSet<S>& params, const std::string& stem, Index in, Index out,
                std::uint64_t seed) {
  Rng rng(mix_seed(seed, hash64(stem + ".w")));
  params.add(stem + ".w", kaiming_uniform<S>({in, out}, in, rng));
  params.add(stem + ".b", Tensor<S>::zeros({out}));
}

template <typename S>
void add_channel_scale(ParameterSet<S>& params, const std::string& stem, Index channels) {
  params.add(stem + ".gamma", Tensor<S>::ones({channels}));
  params.add(stem + ".beta", Tensor<S>::zeros({channels}));
}

}  // namespace detail

template <typename S>
struct ParameterSet {
  std::map<std::string, Tensor<S>> tensors;

  bool has(const std::string& name) const { return tensors.count(name) != 0; }

  Tensor<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("ParameterSet: no parameter '" + name + "'");
    return it->second;
  }
  const Tensor<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("ParameterSet: no parameter '" + name + "'");
    return it->second;
  }

  void add(const std::string& name, Tensor<S> tensor) {
    tensor.set_requires_grad(true);
    if (!tensors.emplace(name, std::move(tensor)).second)
      throw ContractError("ParameterSet: duplicate parameter '" + name + "'");
  }

  void zero_grads() {
    for (auto& [name, tensor] : tensors) tensor.zero_grad();
  }

  Index count() const {
    Index total = 0;
    for (const auto& [name, tensor] : tensors) total += tensor.size();
    return total;
  }

  template <typename T>
  ParameterSet<T> cast() const {
    ParameterSet<T> out;
    for (const auto& [name, tensor] : tensors) out.add(name, tensor.template cast<T>());
    return out;
  }

  // Deep copy; the result owns fresh storage and gradient buffers.
  ParameterSet clone() const {
    ParameterSet out;
    for (const auto& [name, tensor] : tensors) out.add(name, tensor.clone());
    return out;
  }
};

}  // namespace cropsits::models
