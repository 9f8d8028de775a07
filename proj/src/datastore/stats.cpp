#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "cropsits/datastore/stats.hpp"
#include "cropsits/error.hpp"

namespace cropsits::data {

BandStats fit_band_stats(const std::vector<BandStack>& stacks, const BandCombination& combo) {
  std::vector<const BandStack*> ptrs;
  ptrs.reserve(stacks.size());
  for (const BandStack& stack : stacks) ptrs.push_back(&stack);
  return fit_band_stats(ptrs, combo);
}

BandStats fit_band_stats(const std::vector<const BandStack*>& stacks,
                         const BandCombination& combo) {
  if (stacks.empty()) throw ContractError("fit_band_stats: no training stacks");
  const std::size_t nb = combo.tokens.size();
  std::vector<double> sum(nb, 0.0), sumsq(nb, 0.0);
  std::size_t pixels = 0;
  for (const BandStack* stack_ptr : stacks) {
    const BandStack sel = select_bands(*stack_ptr, combo);
    const std::size_t plane = static_cast<std::size_t>(sel.height) *
                              static_cast<std::size_t>(sel.width);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = sel.data[b * plane + i];
        sum[b] += v;
        sumsq[b] += v * v;
      }
    pixels += plane;
  }
  BandStats stats;
  stats.tokens = combo.tokens;
  stats.mean.resize(nb);
  stats.stddev.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const double mean = sum[b] / static_cast<double>(pixels);
    const double var = std::max(0.0, sumsq[b] / static_cast<double>(pixels) - mean * mean);
    stats.mean[b] = mean;
    stats.stddev[b] = std::max(std::sqrt(var), kStdFloor);
  }
  return stats;
}

BandStack apply_band_stats(const BandStack& stack, const BandStats& stats) {
  if (stack.bands != stats.tokens)
    throw ContractError("apply_band_stats: stack bands do not match the fitted tokens");
  BandStack out = stack;
  const std::size_t plane = static_cast<std::size_t>(stack.height) *
                            static_cast<std::size_t>(stack.width);
  for (std::size_t b = 0; b < stats.tokens.size(); ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = b * plane + i;
      out.data[k] = static_cast<float>((stack.data[k] - stats.mean[b]) / stats.stddev[b]);
    }
  return out;
}

std::string band_stats_to_json(const BandStats& stats) {
  nlohmann::json j = {{"tokens", stats.tokens}, {"mean", stats.mean}, {"std", stats.stddev}};
  return j.dump();
}

BandStats band_stats_from_json(const std::string& text) {
  BandStats stats;
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    stats.tokens = j.at("tokens").get<std::vector<std::string>>();
    stats.mean = j.at("mean").get<std::vector<double>>();
    stats.stddev = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("band stats: ") + e.what());
  }
  if (stats.mean.size() != stats.tokens.size() || stats.stddev.size() != stats.tokens.size())
    throw SchemaError("band stats: mismatched field lengths");
  return stats;
}

}  // namespace cropsits::data
