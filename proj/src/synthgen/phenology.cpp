#include <algorithm>
#include <cmath>

#include "cropsits/error.hpp"
#include "cropsits/synthgen/phenology.hpp"

namespace cropsits::synth {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::map<std::string, double> spectrum(std::initializer_list<std::pair<const char*, double>> kv) {
  std::map<std::string, double> s;
  for (const auto& [token, value] : kv) s[token] = value;
  return s;
}

}  // namespace

double double_logistic(double t, const PhenologyParams& p) {
  const double f = sigmoid(p.k1 * (t - p.t0)) - sigmoid(p.k2 * (t - p.t1));
  return std::clamp(f, 0.0, 1.0);
}

double cover_fraction(double t, const PhenologyParams& p) {
  return p.v_min + double_logistic(t, p) * (p.v_max - p.v_min);
}

void CropProfile::validate() const {
  if (name.empty()) throw ContractError("crop profile without a name");
  if (!(0.0 <= phenology.v_min && phenology.v_min < phenology.v_max && phenology.v_max <= 1.0))
    throw ContractError("crop " + name + ": need 0 <= v_min < v_max <= 1");
  if (phenology.k1 <= 0.0 || phenology.k2 <= 0.0)
    throw ContractError("crop " + name + ": sigmoid rates must be positive");
  if (phenology.t0 >= phenology.t1)
    throw ContractError("crop " + name + ": green-up must precede senescence");
  if (sow_doy_min < 1 || sow_doy_max > 366 || sow_doy_min > sow_doy_max)
    throw ContractError("crop " + name + ": bad sowing window");
  if (season_days < 1 || season_days > 366)
    throw ContractError("crop " + name + ": bad season length");
  if (spectral_jitter < 0.0) throw ContractError("crop " + name + ": negative jitter");
  for (const std::string& token : mixed_tokens()) {
    auto it = veg.find(token);
    if (it == veg.end())
      throw ContractError("crop " + name + ": spectrum lacks band " + token);
    if (it->second < 0.0 || it->second > 1.5)
      throw ContractError("crop " + name + ": band " + token + " outside [0, 1.5]");
  }
}

const std::vector<std::string>& native_tokens() {
  static const std::vector<std::string> tokens = {
      "U-B",  "B",          "G",            "R",     "RED-EDGE1", "RED-EDGE2",
      "RED-EDGE3", "NIR",   "NARROW-NIR",   "WATER-VAPOUR", "SWIR1", "SWIR2",
      "PAN",  "CIRRUS",     "TIRS1",        "TIRS2"};
  return tokens;
}

const std::vector<std::string>& mixed_tokens() {
  static const std::vector<std::string> tokens = {
      "U-B", "B", "G", "R", "RED-EDGE1", "RED-EDGE2", "RED-EDGE3",
      "NIR", "NARROW-NIR", "WATER-VAPOUR", "SWIR1", "SWIR2", "PAN"};
  return tokens;
}

int native_band_index(const std::string& token) {
  const auto& tokens = native_tokens();
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] == token) return static_cast<int>(i);
  return -1;
}

const std::map<std::string, double>& soil_spectrum() {
  static const std::map<std::string, double> soil = spectrum({
      {"U-B", 0.06}, {"B", 0.09}, {"G", 0.13}, {"R", 0.19},
      {"RED-EDGE1", 0.21}, {"RED-EDGE2", 0.22}, {"RED-EDGE3", 0.23},
      {"NIR", 0.26}, {"NARROW-NIR", 0.26}, {"WATER-VAPOUR", 0.16},
      {"SWIR1", 0.34}, {"SWIR2", 0.28}, {"PAN", 0.14},
  });
  return soil;
}

const std::vector<CropProfile>& default_profiles() {
  static const std::vector<CropProfile> profiles = [] {
    std::vector<CropProfile> p(5);

    // Flooded rice: standing water crushes SWIR, moderate NIR.
    p[0].name = "paddy";
    p[0].sow_doy_min = 152;
    p[0].sow_doy_max = 182;
    p[0].season_days = 180;
    p[0].phenology = {0.05, 0.95, 45.0, 0.12, 150.0, 0.10};
    p[0].spectral_jitter = 0.015;
    p[0].veg = spectrum({
        {"U-B", 0.03}, {"B", 0.04}, {"G", 0.09}, {"R", 0.05},
        {"RED-EDGE1", 0.12}, {"RED-EDGE2", 0.30}, {"RED-EDGE3", 0.42},
        {"NIR", 0.52}, {"NARROW-NIR", 0.54}, {"WATER-VAPOUR", 0.20},
        {"SWIR1", 0.10}, {"SWIR2", 0.06}, {"PAN", 0.07},
    });

    // Tall dense canopy with a long, slow season and a bright NIR plateau.
    p[1].name = "sugarcane";
    p[1].sow_doy_min = 60;
    p[1].sow_doy_max = 90;
    p[1].season_days = 200;
    p[1].phenology = {0.08, 0.92, 55.0, 0.08, 175.0, 0.06};
    p[1].spectral_jitter = 0.015;
    p[1].veg = spectrum({
        {"U-B", 0.03}, {"B", 0.05}, {"G", 0.11}, {"R", 0.06},
        {"RED-EDGE1", 0.14}, {"RED-EDGE2", 0.34}, {"RED-EDGE3", 0.48},
        {"NIR", 0.78}, {"NARROW-NIR", 0.80}, {"WATER-VAPOUR", 0.22},
        {"SWIR1", 0.24}, {"SWIR2", 0.15}, {"PAN", 0.08},
    });

    // Perennial broadleaf: high baseline cover all season.
    p[2].name = "banana";
    p[2].sow_doy_min = 30;
    p[2].sow_doy_max = 60;
    p[2].season_days = 210;
    p[2].phenology = {0.25, 0.85, 20.0, 0.05, 190.0, 0.05};
    p[2].spectral_jitter = 0.02;
    p[2].veg = spectrum({
        {"U-B", 0.04}, {"B", 0.05}, {"G", 0.10}, {"R", 0.07},
        {"RED-EDGE1", 0.15}, {"RED-EDGE2", 0.32}, {"RED-EDGE3", 0.44},
        {"NIR", 0.68}, {"NARROW-NIR", 0.70}, {"WATER-VAPOUR", 0.24},
        {"SWIR1", 0.30}, {"SWIR2", 0.20}, {"PAN", 0.08},
    });

    // Short winter season, quick green-up and senescence.
    p[3].name = "pulses";
    p[3].sow_doy_min = 280;
    p[3].sow_doy_max = 310;
    p[3].season_days = 150;
    p[3].phenology = {0.05, 0.88, 30.0, 0.15, 110.0, 0.12};
    p[3].spectral_jitter = 0.015;
    p[3].veg = spectrum({
        {"U-B", 0.03}, {"B", 0.05}, {"G", 0.10}, {"R", 0.06},
        {"RED-EDGE1", 0.13}, {"RED-EDGE2", 0.31}, {"RED-EDGE3", 0.43},
        {"NIR", 0.60}, {"NARROW-NIR", 0.62}, {"WATER-VAPOUR", 0.21},
        {"SWIR1", 0.17}, {"SWIR2", 0.11}, {"PAN", 0.07},
    });

    // Mixed vegetation: flatter curve, wider jitter, muted infrared.
    p[4].name = "other";
    p[4].sow_doy_min = 100;
    p[4].sow_doy_max = 130;
    p[4].season_days = 170;
    p[4].phenology = {0.10, 0.75, 40.0, 0.09, 140.0, 0.08};
    p[4].spectral_jitter = 0.03;
    p[4].veg = spectrum({
        {"U-B", 0.04}, {"B", 0.06}, {"G", 0.11}, {"R", 0.09},
        {"RED-EDGE1", 0.14}, {"RED-EDGE2", 0.26}, {"RED-EDGE3", 0.34},
        {"NIR", 0.47}, {"NARROW-NIR", 0.48}, {"WATER-VAPOUR", 0.18},
        {"SWIR1", 0.27}, {"SWIR2", 0.19}, {"PAN", 0.10},
    });

    for (const CropProfile& profile : p) profile.validate();
    return p;
  }();
  return profiles;
}

const CropProfile& profile_by_name(const std::string& name) {
  for (const CropProfile& p : default_profiles())
    if (p.name == name) return p;
  throw UsageError("unknown crop '" + name + "'");
}

}  // namespace cropsits::synth
