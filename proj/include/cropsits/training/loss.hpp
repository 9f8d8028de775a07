#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "cropsits/error.hpp"
#include "cropsits/numcore/ops.hpp"

namespace cropsits::train {

using num::Index;
using num::Tape;
using num::Tensor;
using num::Var;

// Per-class weights proportional to 1/frequency, normalized to mean 1 so the
// loss scale stays comparable across weighting modes. Classes absent from
// `labels` count once, which keeps their weight finite.
inline std::vector<double> inverse_frequency_alpha(const std::vector<Index>& labels, Index k) {
  if (k < 1) throw ContractError("inverse_frequency_alpha: need at least one class");
  if (labels.empty()) throw ContractError("inverse_frequency_alpha: no labels");
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (Index y : labels) {
    if (y < 0 || y >= k)
      throw ContractError("inverse_frequency_alpha: label " + std::to_string(y) +
                          " out of range [0," + std::to_string(k) + ")");
    count[static_cast<std::size_t>(y)] += 1.0;
  }
  std::vector<double> alpha(static_cast<std::size_t>(k));
  double total = 0.0;
  for (std::size_t c = 0; c < alpha.size(); ++c) {
    alpha[c] = 1.0 / std::max(count[c], 1.0);
    total += alpha[c];
  }
  for (double& a : alpha) a *= static_cast<double>(k) / total;
  return alpha;
}

struct FocalConfig {
  double gamma = 2.0;
  std::vector<double> alpha;  // one positive weight per class; empty = uniform 1

  void validate(Index k) const {
    if (gamma < 0) throw ContractError("FocalConfig: gamma must be nonnegative");
    if (alpha.empty()) return;
    if (static_cast<Index>(alpha.size()) != k)
      throw ContractError("FocalConfig: " + std::to_string(alpha.size()) + " alpha weights for " +
                          std::to_string(k) + " classes");
    for (double a : alpha)
      if (!(a > 0)) throw ContractError("FocalConfig: alpha weights must be positive");
  }
};

// Mean over the batch of -alpha_y * (1 - p_y)^gamma * log(p_y), with p the
// softmax of the logits and p_y floored at 1e-12 inside the log. gamma = 0
// reduces exactly to weighted cross-entropy.
template <typename S>
Var<S> focal_loss(Tape<S>& tape, const Var<S>& logits, const std::vector<Index>& labels,
                  const FocalConfig& config) {
  if (logits.shape().size() != 2)
    throw DimensionError("focal_loss: logits must be [batch, classes]");
  const Index n = logits.dim(0), k = logits.dim(1);
  if (static_cast<Index>(labels.size()) != n)
    throw ContractError("focal_loss: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  config.validate(k);

  using namespace num;
  Var<S> p = take_per_row(softmax(logits, 1), labels);  // [n], validates the labels
  Var<S> log_p = safe_log(p);
  Var<S> weighted = log_p;
  if (config.gamma != 0) {
    Var<S> focus = pow_const(add_scalar(neg(p), S(1)), static_cast<S>(config.gamma));
    weighted = mul(focus, log_p);
  }
  if (!config.alpha.empty()) {
    Tensor<S> alpha({n});
    for (Index i = 0; i < n; ++i)
      alpha.data()[static_cast<std::size_t>(i)] =
          static_cast<S>(config.alpha[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])]);
    weighted = mul(weighted, tape.constant(alpha));
  }
  return neg(mean_all(weighted));
}

}  // namespace cropsits::train
