#include "cropsits/datastore/sensor.hpp"

#include <algorithm>
#include <string>

#include "cropsits/error.hpp"

namespace cropsits::data {

bool SensorSpec::has_band(std::string_view token) const { return band_index(token) >= 0; }

int SensorSpec::band_index(std::string_view token) const {
  auto it = std::find(bands.begin(), bands.end(), token);
  return it == bands.end() ? -1 : static_cast<int>(it - bands.begin());
}

const std::vector<SensorSpec>& all_sensors() {
  static const std::vector<SensorSpec> sensors = {
      {"L8",
       {"U-B", "B", "G", "R", "NIR", "SWIR1", "SWIR2", "PAN", "CIRRUS", "TIRS1", "TIRS2"},
       3, 3, 9, 41, 16},
      {"S2",
       {"U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3", "NIR", "NARROW-NIR",
        "WATER-VAPOUR", "SWIR1", "SWIR2"},
       7, 7, 49, 134, 5},
      {"PS", {"B", "G", "R", "NIR"}, 19, 19, 300, 210, 1},
  };
  return sensors;
}

const SensorSpec& sensor_by_name(std::string_view name) {
  for (const SensorSpec& s : all_sensors())
    if (s.name == name) return s;
  throw UsageError("unknown satellite '" + std::string(name) + "' (expected L8, S2, or PS)");
}

}  // namespace cropsits::data
