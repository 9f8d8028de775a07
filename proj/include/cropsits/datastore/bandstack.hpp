#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cropsits/datastore/sensor.hpp"

namespace cropsits::data {

// One multispectral chip: every band of one parcel on one acquisition date.
// Data is band-major [band][row][col], 32-bit reflectance.
struct BandStack {
  std::string parcel_id;
  std::string satellite;
  std::string date;  // ISO 8601 calendar date
  std::string season_id;
  int height = 0;
  int width = 0;
  std::vector<std::string> bands;
  std::vector<float> data;
  std::optional<std::string> label;

  float at(int b, int r, int c) const {
    return data[static_cast<std::size_t>((b * height + r) * width + c)];
  }
  float& at(int b, int r, int c) {
    return data[static_cast<std::size_t>((b * height + r) * width + c)];
  }
  int band_count() const { return static_cast<int>(bands.size()); }

  // Throws ContractError when invariants do not hold: known satellite,
  // bands a subsequence of the canonical order, data length B*H*W, all
  // values finite.
  void validate() const;
};

// Bit-exact equality (floats compared by representation).
bool operator==(const BandStack& a, const BandStack& b);

// Serialized form: "BSF1", u32 little-endian header length, JSON header,
// then B*H*W little-endian 32-bit floats. Writes are staged to a temporary
// and renamed into place.
void write_bandstack(const BandStack& stack, const std::filesystem::path& path);
BandStack read_bandstack(const std::filesystem::path& path);

// In-memory codec behind the file operations; exposed for tests and bulk IO.
std::string encode_bandstack(const BandStack& stack);
BandStack decode_bandstack(std::string_view bytes, const std::string& origin);

// A '+'-separated band selection, resolved against one sensor.
struct BandCombination {
  std::vector<std::string> tokens;  // in written order
  std::vector<int> indices;         // positions in the sensor's canonical order
};

// Malformed text (empty or duplicate tokens) is a usage error; a token the
// sensor lacks is an unknown-band error.
BandCombination parse_band_combination(std::string_view text, const SensorSpec& sensor);

// Projects the stack onto the combination's tokens, in combination order.
// The result is an in-memory model input; it may leave canonical band order.
BandStack select_bands(const BandStack& stack, const BandCombination& combo);

// Per-band bilinear resampling with half-pixel centers; matching dimensions
// pass through bit-identically.
BandStack resize_bilinear(const BandStack& stack, int target_h, int target_w);

}  // namespace cropsits::data
