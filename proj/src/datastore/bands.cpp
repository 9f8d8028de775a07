#include <algorithm>
#include <cmath>
#include <string>

#include "cropsits/datastore/bandstack.hpp"
#include "cropsits/error.hpp"

namespace cropsits::data {

BandCombination parse_band_combination(std::string_view text, const SensorSpec& sensor) {
  BandCombination combo;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('+', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view token = text.substr(start, end - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (token.empty())
      throw UsageError("band combination '" + std::string(text) + "': empty token");
    if (std::find(combo.tokens.begin(), combo.tokens.end(), token) != combo.tokens.end())
      throw UsageError("band combination '" + std::string(text) + "': duplicate token '" +
                       std::string(token) + "'");
    int idx = sensor.band_index(token);
    if (idx < 0)
      throw UnknownBandError("band '" + std::string(token) + "' is not available on " +
                             sensor.name);
    combo.tokens.emplace_back(token);
    combo.indices.push_back(idx);
    if (end == text.size()) break;
    start = end + 1;
  }
  if (combo.tokens.empty()) throw UsageError("empty band combination");
  return combo;
}

BandStack select_bands(const BandStack& stack, const BandCombination& combo) {
  const std::size_t plane = static_cast<std::size_t>(stack.height) *
                            static_cast<std::size_t>(stack.width);
  BandStack out = stack;
  out.bands.clear();
  out.data.clear();
  out.bands.reserve(combo.tokens.size());
  out.data.reserve(combo.tokens.size() * plane);
  for (const std::string& token : combo.tokens) {
    auto it = std::find(stack.bands.begin(), stack.bands.end(), token);
    if (it == stack.bands.end())
      throw UnknownBandError("band '" + token + "' is not present in stack " + stack.parcel_id +
                             "/" + stack.date);
    const std::size_t b = static_cast<std::size_t>(it - stack.bands.begin());
    out.bands.push_back(token);
    out.data.insert(out.data.end(), stack.data.begin() + static_cast<std::ptrdiff_t>(b * plane),
                    stack.data.begin() + static_cast<std::ptrdiff_t>((b + 1) * plane));
  }
  return out;
}

BandStack resize_bilinear(const BandStack& stack, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0)
    throw ContractError("resize_bilinear: nonpositive target " + std::to_string(target_h) + "x" +
                        std::to_string(target_w));
  if (target_h == stack.height && target_w == stack.width) return stack;

  BandStack out = stack;
  out.height = target_h;
  out.width = target_w;
  out.data.assign(stack.bands.size() * static_cast<std::size_t>(target_h) *
                      static_cast<std::size_t>(target_w),
                  0.0f);
  const int sh = stack.height, sw = stack.width;
  for (int b = 0; b < stack.band_count(); ++b)
    for (int i = 0; i < target_h; ++i) {
      // half-pixel centers: output center (i+0.5) maps into source units
      double sy = (static_cast<double>(i) + 0.5) * sh / target_h - 0.5;
      sy = std::min(std::max(sy, 0.0), static_cast<double>(sh - 1));
      const int y0 = static_cast<int>(sy);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double fy = sy - y0;
      for (int j = 0; j < target_w; ++j) {
        double sx = (static_cast<double>(j) + 0.5) * sw / target_w - 0.5;
        sx = std::min(std::max(sx, 0.0), static_cast<double>(sw - 1));
        const int x0 = static_cast<int>(sx);
        const int x1 = std::min(x0 + 1, sw - 1);
        const double fx = sx - x0;
        const double top = stack.at(b, y0, x0) * (1.0 - fx) + stack.at(b, y0, x1) * fx;
        const double bottom = stack.at(b, y1, x0) * (1.0 - fx) + stack.at(b, y1, x1) * fx;
        out.at(b, i, j) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
    }
  return out;
}

}  // namespace cropsits::data
