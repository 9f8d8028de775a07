#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cropsits::synth {

// Everything one dataset build depends on. Weights reference stock crop
// profiles by name; an empty map means all of them, equally weighted.
struct SceneConfig {
  int parcels = 172;
  std::map<std::string, double> crop_weights;
  std::vector<std::string> satellites = {"L8", "S2", "PS"};
  std::map<std::string, double> noise_sigma;  // per satellite, default 0.01
  std::map<std::string, double> dropout;      // per satellite, default 0
  double cover_jitter = 0.1;                  // per-pixel cover heterogeneity
  int native_grid = 19;
  int season_year = 2020;
  std::uint64_t seed = 0;

  double noise_for(const std::string& satellite) const;
  double dropout_for(const std::string& satellite) const;

  // Throws UsageError on semantic problems: no parcels, unknown satellites or
  // crops, nonpositive weights, dropout outside [0, 1), and so on.
  void validate() const;
};

// Rank weights 1/r^s for r = 1..count; s = 0 is uniform.
std::vector<double> zipf_weights(int count, double s);

std::string scene_config_to_json(const SceneConfig& config);
SceneConfig scene_config_from_json(const std::string& text, const std::string& origin);

}  // namespace cropsits::synth
