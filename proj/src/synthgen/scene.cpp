#include <cmath>
#include <nlohmann/json.hpp>

#include "cropsits/datastore/sensor.hpp"
#include "cropsits/error.hpp"
#include "cropsits/synthgen/phenology.hpp"
#include "cropsits/synthgen/scene.hpp"

namespace cropsits::synth {

double SceneConfig::noise_for(const std::string& satellite) const {
  auto it = noise_sigma.find(satellite);
  return it == noise_sigma.end() ? 0.01 : it->second;
}

double SceneConfig::dropout_for(const std::string& satellite) const {
  auto it = dropout.find(satellite);
  return it == dropout.end() ? 0.0 : it->second;
}

void SceneConfig::validate() const {
  if (parcels < 1) throw UsageError("scene: parcel count must be positive");
  if (satellites.empty()) throw UsageError("scene: no satellites requested");
  for (std::size_t i = 0; i < satellites.size(); ++i) {
    data::sensor_by_name(satellites[i]);  // throws UsageError on unknown names
    for (std::size_t j = i + 1; j < satellites.size(); ++j)
      if (satellites[i] == satellites[j])
        throw UsageError("scene: satellite " + satellites[i] + " listed twice");
  }
  for (const auto& [name, weight] : crop_weights) {
    profile_by_name(name);
    if (!(weight > 0.0)) throw UsageError("scene: crop " + name + " needs a positive weight");
  }
  for (const auto& [sat, sigma] : noise_sigma)
    if (sigma < 0.0) throw UsageError("scene: negative noise for " + sat);
  for (const auto& [sat, p] : dropout)
    if (!(p >= 0.0 && p < 1.0)) throw UsageError("scene: dropout for " + sat + " outside [0, 1)");
  if (cover_jitter < 0.0) throw UsageError("scene: negative cover jitter");
  if (native_grid != 19) throw UsageError("scene: the native grid is fixed at 19");
  if (season_year < 1900 || season_year > 2100) throw UsageError("scene: implausible season year");
}

std::vector<double> zipf_weights(int count, double s) {
  if (count < 1) throw ContractError("zipf_weights: count must be positive");
  std::vector<double> w(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) w[static_cast<std::size_t>(r)] = std::pow(r + 1.0, -s);
  return w;
}

std::string scene_config_to_json(const SceneConfig& config) {
  nlohmann::json j;
  j["parcels"] = config.parcels;
  j["crop_weights"] = config.crop_weights;
  j["satellites"] = config.satellites;
  j["noise_sigma"] = config.noise_sigma;
  j["dropout"] = config.dropout;
  j["cover_jitter"] = config.cover_jitter;
  j["native_grid"] = config.native_grid;
  j["season_year"] = config.season_year;
  j["seed"] = config.seed;
  return j.dump(2) + "\n";
}

SceneConfig scene_config_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  SceneConfig config;
  try {
    config.parcels = j.value("parcels", config.parcels);
    config.crop_weights = j.value("crop_weights", config.crop_weights);
    config.satellites = j.value("satellites", config.satellites);
    config.noise_sigma = j.value("noise_sigma", config.noise_sigma);
    config.dropout = j.value("dropout", config.dropout);
    config.cover_jitter = j.value("cover_jitter", config.cover_jitter);
    config.native_grid = j.value("native_grid", config.native_grid);
    config.season_year = j.value("season_year", config.season_year);
    config.seed = j.value("seed", config.seed);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  config.validate();
  return config;
}

}  // namespace cropsits::synth
