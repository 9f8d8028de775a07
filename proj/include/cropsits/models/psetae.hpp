#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cropsits/error.hpp"
#include "cropsits/models/params.hpp"
#include "cropsits/numcore/ops.hpp"
#include "cropsits/rng.hpp"

// Pixel-set encoder with temporal attention, for classifying parcels from
// irregular image sequences. Each date contributes an unordered set of pixels
// that is pooled into per-band statistics; a multi-head attention layer then
// collapses the date axis, with a master query averaged over valid steps so
// padding never influences the result.

namespace cropsits::models {

struct PsetaeConfig {
  Index bands = 0;
  Index pixels = 0;
  Index t_max = 0;
  Index classes = 0;
  Index mlp1_hidden = 32;
  Index mlp1_out = 64;
  Index d_model = 128;
  Index heads = 4;
  Index d_k = 32;
  Index mlp3_out = 128;
  Index dec_hidden1 = 64;
  Index dec_hidden2 = 32;

  void validate() const {
    if (bands <= 0 || pixels <= 0 || t_max <= 0)
      throw ContractError("PsetaeConfig: input dims must be positive");
    if (classes < 2) throw ContractError("PsetaeConfig: need at least two classes");
    if (mlp1_hidden <= 0 || mlp1_out <= 0 || d_model <= 0 || heads <= 0 || d_k <= 0 ||
        mlp3_out <= 0 || dec_hidden1 <= 0 || dec_hidden2 <= 0)
      throw ContractError("PsetaeConfig: layer widths must be positive");
    if (heads * d_k != d_model)
      throw ContractError("PsetaeConfig: heads * d_k must equal d_model");
    if (2 * mlp1_out != d_model)
      throw ContractError("PsetaeConfig: pooling doubles mlp1_out, which must give d_model");
  }
};

std::string psetae_config_to_json(const PsetaeConfig& config);
PsetaeConfig psetae_config_from_json(const std::string& text, const std::string& origin);

// Sinusoidal position code: pe[2i] = sin(p / 10000^(2i/d)), pe[2i+1] is the
// matching cosine. `position` is the acquisition's day offset within the
// sequence, so irregular revisit gaps keep their calendar geometry.
inline std::vector<double> positional_encoding(int position, int d) {
  if (position < 0) throw ContractError("positional_encoding: negative position");
  if (d <= 0 || d % 2 != 0)
    throw ContractError("positional_encoding: dimension must be positive and even");
  std::vector<double> pe(static_cast<std::size_t>(d));
  for (int i = 0; 2 * i < d; ++i) {
    const double rate = std::pow(10000.0, 2.0 * i / d);
    pe[static_cast<std::size_t>(2 * i)] = std::sin(position / rate);
    pe[static_cast<std::size_t>(2 * i + 1)] = std::cos(position / rate);
  }
  return pe;
}

template <typename S>
ParameterSet<S> init_psetae_params(const PsetaeConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet<S> params;
  detail::add_affine<S>(params, "mlp1.1", config.bands, config.mlp1_hidden, seed);
  detail::add_affine<S>(params, "mlp1.2", config.mlp1_hidden, config.mlp1_out, seed);
  detail::add_affine<S>(params, "mlp2", config.d_model, config.d_model, seed);
  for (Index h = 0; h < config.heads; ++h) {
    const std::string stem = "tae.h" + std::to_string(h);
    detail::add_affine<S>(params, stem + ".q", config.d_model, config.d_k, seed);
    detail::add_affine<S>(params, stem + ".k", config.d_model, config.d_k, seed);
    detail::add_affine<S>(params, stem + ".v", config.d_model, config.d_k, seed);
  }
  detail::add_affine<S>(params, "mlp3", config.d_model, config.mlp3_out, seed);
  detail::add_affine<S>(params, "dec.1", config.mlp3_out, config.dec_hidden1, seed);
  detail::add_affine<S>(params, "dec.2", config.dec_hidden1, config.dec_hidden2, seed);
  detail::add_affine<S>(params, "dec.3", config.dec_hidden2, config.classes, seed);
  return params;
}

// Spatial encoder. x is [N, T, n, bands] with any n >= 1; every date's pixel
// set is pooled into concatenated mean and std features, so the result is
// invariant to pixel order. Returns [N, T, d_model].
template <typename S>
Var<S> pse_forward(Tape<S>& tape, const Tensor<S>& x, ParameterSet<S>& params,
                   const PsetaeConfig& config) {
  config.validate();
  if (x.rank() != 4 || x.dim(3) != config.bands)
    throw DimensionError("pse_forward: expected [N,T,n," + std::to_string(config.bands) +
                         "], got " + num::shape_str(x.shape()));
  const Index N = x.dim(0), T = x.dim(1), n = x.dim(2);
  if (n < 1) throw ContractError("pse_forward: empty pixel set");

  using namespace num;
  Var<S> h = reshape(tape.constant(x), {N * T * n, config.bands});
  h = relu(affine(h, tape.leaf(params.at("mlp1.1.w")), tape.leaf(params.at("mlp1.1.b"))));
  h = relu(affine(h, tape.leaf(params.at("mlp1.2.w")), tape.leaf(params.at("mlp1.2.b"))));
  Var<S> pooled = mean_std_pool(reshape(h, {N * T, n, config.mlp1_out}));  // [N*T, d_model]
  Var<S> dated = relu(affine(pooled, tape.leaf(params.at("mlp2.w")), tape.leaf(params.at("mlp2.b"))));
  return reshape(dated, {N, T, config.d_model});
}

// Temporal encoder. emb is [N, T, d_model]; mask and positions are [N, T]
// with mask 1 on valid steps. Each head forms its query from the mean over
// valid steps and softmaxes only across them, so padded steps contribute
// exact zeros. Pass `attention` to receive the weights as [heads, N, T].
// Returns pooled features [N, mlp3_out].
template <typename S>
Var<S> tae_forward(Tape<S>& tape, const Var<S>& emb, const Tensor<S>& mask,
                   const Tensor<S>& positions, ParameterSet<S>& params,
                   const PsetaeConfig& config, Tensor<S>* attention = nullptr) {
  config.validate();
  if (emb.shape().size() != 3 || emb.dim(2) != config.d_model)
    throw DimensionError("tae_forward: embedding must be [N,T,d_model]");
  const Index N = emb.dim(0), T = emb.dim(1), D = config.d_model;
  if (mask.shape() != Shape{N, T})
    throw DimensionError("tae_forward: mask must be [N,T]");
  if (positions.shape() != Shape{N, T})
    throw DimensionError("tae_forward: positions must be [N,T]");

  using namespace num;
  Tensor<S> pe({N, T, D});
  Tensor<S> inv_len({N, 1, config.d_k});
  for (Index s = 0; s < N; ++s) {
    double len = 0;
    for (Index t = 0; t < T; ++t) {
      len += static_cast<double>(mask(s, t));
      const int day = static_cast<int>(std::lround(static_cast<double>(positions(s, t))));
      const std::vector<double> code = positional_encoding(day, static_cast<int>(D));
      for (Index d = 0; d < D; ++d)
        pe(s, t, d) = static_cast<S>(code[static_cast<std::size_t>(d)]);
    }
    if (len <= 0) throw ContractError("tae_forward: sequence " + std::to_string(s) +
                                      " has no valid steps");
    for (Index d = 0; d < config.d_k; ++d) inv_len(s, 0, d) = static_cast<S>(1.0 / len);
  }
  Tensor<S> mask_row = mask.reshaped({N, 1, T});

  Var<S> e = add(emb, tape.constant(pe));
  Var<S> flat = reshape(e, {N * T, D});
  Var<S> mask_var = tape.constant(mask_row);
  Var<S> inv_var = tape.constant(inv_len);
  const S inv_sqrt_dk = static_cast<S>(1.0 / std::sqrt(static_cast<double>(config.d_k)));

  if (attention) *attention = Tensor<S>({config.heads, N, T});
  Var<S> joined;
  for (Index head = 0; head < config.heads; ++head) {
    const std::string stem = "tae.h" + std::to_string(head);
    auto project = [&](const std::string& role) {
      return reshape(affine(flat, tape.leaf(params.at(stem + "." + role + ".w")),
                            tape.leaf(params.at(stem + "." + role + ".b"))),
                     {N, T, config.d_k});
    };
    Var<S> q = project("q");
    Var<S> k = project("k");
    Var<S> v = project("v");

    Var<S> master = mul(bmm(mask_var, q), inv_var);                       // [N,1,d_k]
    Var<S> scores = scale(bmm(master, permute(k, {0, 2, 1})), inv_sqrt_dk);  // [N,1,T]
    Var<S> weights = masked_softmax(scores, mask_row);
    if (attention) {
      const Tensor<S>& w = weights.value();
      for (Index s = 0; s < N; ++s)
        for (Index t = 0; t < T; ++t) (*attention)(head, s, t) = w(s, 0, t);
    }
    Var<S> pooled = bmm(weights, v);  // [N,1,d_k]
    joined = head == 0 ? pooled : concat_last(joined, pooled);
  }
  Var<S> features = reshape(joined, {N, D});
  return relu(affine(features, tape.leaf(params.at("mlp3.w")), tape.leaf(params.at("mlp3.b"))));
}

// Classification head over pooled features: [N, mlp3_out] -> logits [N, classes].
template <typename S>
Var<S> decoder_forward(Tape<S>& tape, const Var<S>& features, ParameterSet<S>& params,
                       const PsetaeConfig& config) {
  using namespace num;
  Var<S> h = relu(affine(features, tape.leaf(params.at("dec.1.w")), tape.leaf(params.at("dec.1.b"))));
  h = relu(affine(h, tape.leaf(params.at("dec.2.w")), tape.leaf(params.at("dec.2.b"))));
  return affine(h, tape.leaf(params.at("dec.3.w")), tape.leaf(params.at("dec.3.b")));
}

// Full model: pixel sets [N, T, n, bands] to logits [N, classes].
template <typename S>
Var<S> psetae_forward(Tape<S>& tape, const Tensor<S>& x, const Tensor<S>& mask,
                      const Tensor<S>& positions, ParameterSet<S>& params,
                      const PsetaeConfig& config, Tensor<S>* attention = nullptr) {
  Var<S> emb = pse_forward(tape, x, params, config);
  Var<S> features = tae_forward(tape, emb, mask, positions, params, config, attention);
  return decoder_forward(tape, features, params, config);
}

}  // namespace cropsits::models
