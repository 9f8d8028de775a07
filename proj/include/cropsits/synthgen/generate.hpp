#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cropsits/datastore/bandstack.hpp"
#include "cropsits/datastore/sensor.hpp"
#include "cropsits/synthgen/phenology.hpp"
#include "cropsits/synthgen/scene.hpp"

namespace cropsits::synth {

// A parcel's noiseless ground truth: one native 19x19 frame per season day,
// carrying every token in native_tokens() order. Sensors are projections of
// this grid, so their noiseless pixels are exact block means of it.
struct ParcelSeries {
  std::string parcel_id;
  std::string label;
  std::string season_id;
  std::int64_t start_day = 0;  // days since 1970-01-01
  int grid = 19;
  std::vector<std::vector<float>> days;  // [day][(band*grid + r)*grid + c]

  int day_count() const { return static_cast<int>(days.size()); }
  const float* plane(int day, int band) const {
    return days[static_cast<std::size_t>(day)].data() +
           static_cast<std::size_t>(band) * static_cast<std::size_t>(grid) *
               static_cast<std::size_t>(grid);
  }
  float at(int day, int band, int r, int c) const { return plane(day, band)[r * grid + c]; }
};

// Phenology-mixed spectra with per-parcel endmember jitter and a per-pixel
// cover field; thermal and cirrus proxies depend on the calendar, not the
// crop. Deterministic in (profile, config, parcel_id, seed).
ParcelSeries generate_parcel_series(const CropProfile& profile, const SceneConfig& config,
                                    const std::string& parcel_id, std::uint64_t seed);

// Mean over the block with boundaries floor(i*grid/k); returns k*k row-major.
std::vector<float> block_average(const float* plane, int grid, int k);

// One sensor acquisition: block-averaged native bands plus Gaussian noise.
data::BandStack emit_chip(const ParcelSeries& series, const data::SensorSpec& sensor,
                          int day_index, double noise_sigma, std::uint64_t noise_seed);

struct DatasetSummary {
  std::map<std::string, std::filesystem::path> manifests;  // satellite -> path
  std::map<std::string, int> records;                      // satellite -> chips written
  std::map<std::string, int> labels;                       // crop -> parcels assigned
  std::filesystem::path config_path;
};

// Emits BSF chips under out_dir/<satellite>/ on each sensor's revisit cadence
// (minus dropout), one manifest per satellite, and the effective scene config.
// Manifest paths are relative to the manifest's own directory.
DatasetSummary generate_dataset(const SceneConfig& config, const std::filesystem::path& out_dir);

}  // namespace cropsits::synth
