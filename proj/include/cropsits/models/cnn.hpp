#pragma once

#include <cstdint>
#include <string>

#include "cropsits/error.hpp"
#include "cropsits/models/params.hpp"
#include "cropsits/numcore/ops.hpp"
#include "cropsits/rng.hpp"

// Residual CNN for single-date chips. Two residual blocks at full resolution
// (no downsampling; inputs are small neighbourhoods, not scenes), per-channel
// affine scaling in place of batch normalization, and a global average pool
// ahead of a two-layer head.

namespace cropsits::models {

using num::Tape;
using num::Var;

struct CnnConfig {
  Index in_channels = 0;
  Index height = 0;
  Index width = 0;
  Index classes = 0;
  Index stem = 32;
  Index block1 = 32;
  Index block2 = 64;
  Index head_hidden = 32;

  void validate() const {
    if (in_channels <= 0 || height <= 0 || width <= 0)
      throw ContractError("CnnConfig: input dims must be positive");
    if (classes < 2) throw ContractError("CnnConfig: need at least two classes");
    if (stem <= 0 || block1 <= 0 || block2 <= 0 || head_hidden <= 0)
      throw ContractError("CnnConfig: layer widths must be positive");
    if (stem != block1)
      throw ContractError("CnnConfig: block1 uses an identity skip, so stem must equal block1");
  }
};

std::string cnn_config_to_json(const CnnConfig& config);
CnnConfig cnn_config_from_json(const std::string& text, const std::string& origin);

template <typename S>
ParameterSet<S> init_cnn_params(const CnnConfig& config, std::uint64_t seed) {
  config.validate();
  ParameterSet<S> params;
  detail::add_conv(params, "stem.w", config.stem, config.in_channels, 3, seed);
  detail::add_channel_scale(params, "stem", config.stem);

  detail::add_conv(params, "block1.conv1.w", config.block1, config.stem, 3, seed);
  detail::add_channel_scale(params, "block1.affine1", config.block1);
  detail::add_conv(params, "block1.conv2.w", config.block1, config.block1, 3, seed);
  detail::add_channel_scale(params, "block1.affine2", config.block1);

  detail::add_conv(params, "block2.conv1.w", config.block2, config.block1, 3, seed);
  detail::add_channel_scale(params, "block2.affine1", config.block2);
  detail::add_conv(params, "block2.conv2.w", config.block2, config.block2, 3, seed);
  detail::add_channel_scale(params, "block2.affine2", config.block2);
  detail::add_conv(params, "block2.proj.w", config.block2, config.block1, 1, seed);

  detail::add_affine<S>(params, "head.1", config.block2, config.head_hidden, seed);
  detail::add_affine<S>(params, "head.2", config.head_hidden, config.classes, seed);
  return params;
}

// x is [N, in_channels, height, width]; returns logits [N, classes].
template <typename S>
Var<S> cnn_forward(Tape<S>& tape, const Tensor<S>& x, ParameterSet<S>& params,
                   const CnnConfig& config) {
  config.validate();
  if (x.rank() != 4 || x.dim(1) != config.in_channels || x.dim(2) != config.height ||
      x.dim(3) != config.width)
    throw DimensionError("cnn_forward: input shape does not match the configuration");

  using namespace num;
  auto scaled = [&](Var<S> h, const std::string& stem) {
    return scale_channels(h, tape.leaf(params.at(stem + ".gamma")),
                          tape.leaf(params.at(stem + ".beta")));
  };

  Var<S> input = tape.constant(x);
  Var<S> h = relu(scaled(conv2d(input, tape.leaf(params.at("stem.w")), 1, 1), "stem"));

  Var<S> b1 = relu(scaled(conv2d(h, tape.leaf(params.at("block1.conv1.w")), 1, 1),
                          "block1.affine1"));
  b1 = scaled(conv2d(b1, tape.leaf(params.at("block1.conv2.w")), 1, 1), "block1.affine2");
  h = relu(add(b1, h));

  Var<S> b2 = relu(scaled(conv2d(h, tape.leaf(params.at("block2.conv1.w")), 1, 1),
                          "block2.affine1"));
  b2 = scaled(conv2d(b2, tape.leaf(params.at("block2.conv2.w")), 1, 1), "block2.affine2");
  Var<S> shortcut = conv2d(h, tape.leaf(params.at("block2.proj.w")), 1, 0);
  h = relu(add(b2, shortcut));

  Var<S> pooled = mean_axis(mean_axis(h, 3), 2);  // [N, block2]
  Var<S> hidden = relu(affine(pooled, tape.leaf(params.at("head.1.w")),
                              tape.leaf(params.at("head.1.b"))));
  return affine(hidden, tape.leaf(params.at("head.2.w")), tape.leaf(params.at("head.2.b")));
}

}  // namespace cropsits::models
