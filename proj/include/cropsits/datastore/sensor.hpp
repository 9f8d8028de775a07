#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cropsits::data {

// Static description of one satellite product as this pipeline consumes it:
// canonical band order, average parcel chip size, pixel-set size n, and the
// longest per-season acquisition sequence T.
struct SensorSpec {
  std::string name;
  std::vector<std::string> bands;  // canonical order; stacks store subsequences
  int chip_h = 0;
  int chip_w = 0;
  int pixel_set_size = 0;  // n pixels drawn per parcel
  int max_seq_len = 0;     // T, padding target for sequence models
  int revisit_days = 0;    // nominal acquisition cadence

  bool has_band(std::string_view token) const;
  int band_index(std::string_view token) const;  // -1 when absent
};

const std::vector<SensorSpec>& all_sensors();

// Unknown names are a usage error (they arrive from CLI flags and headers).
const SensorSpec& sensor_by_name(std::string_view name);

}  // namespace cropsits::data
