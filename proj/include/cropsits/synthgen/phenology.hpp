#pragma once

#include <map>
#include <string>
#include <vector>

namespace cropsits::synth {

// Canopy-cover curve: the difference of a green-up and a senescence sigmoid,
// clamped to [0, 1], then mapped into [v_min, v_max].
struct PhenologyParams {
  double v_min = 0.0;
  double v_max = 1.0;
  double t0 = 0.0;  // green-up inflection, days from season start
  double k1 = 0.1;  // green-up rate
  double t1 = 0.0;  // senescence inflection
  double k2 = 0.1;  // senescence rate
};

// Raw curve in [0, 1]; t in days from season start.
double double_logistic(double t, const PhenologyParams& p);

// v_min + f(t) * (v_max - v_min): the vegetation cover used for mixing.
double cover_fraction(double t, const PhenologyParams& p);

// One crop: when it grows, how fast, and what its canopy reflects. Spectra
// are linear mixing endmembers over the canonical band tokens; pixels blend
// this against the shared soil spectrum by vegetation cover.
struct CropProfile {
  std::string name;
  int sow_doy_min = 0;  // sowing window, day of year
  int sow_doy_max = 0;
  int season_days = 0;
  PhenologyParams phenology;
  std::map<std::string, double> veg;  // token -> endmember reflectance
  double spectral_jitter = 0.0;       // per-parcel endmember sigma

  // Throws ContractError unless 0 <= v_min < v_max <= 1, k1,k2 > 0, t0 < t1,
  // the sowing window and season length are sane, and the spectrum covers
  // every mixed token with values in [0, 1.5].
  void validate() const;
};

// All band tokens a native frame carries: the union of the three sensors'
// canonical orders. The last three (CIRRUS, TIRS1, TIRS2) are atmospheric and
// thermal proxies, generated independently of crop identity; the rest are
// endmember-mixed.
const std::vector<std::string>& native_tokens();
const std::vector<std::string>& mixed_tokens();
int native_band_index(const std::string& token);  // -1 when absent

// Shared bare-soil endmember.
const std::map<std::string, double>& soil_spectrum();

// Five stock crops: paddy, sugarcane, banana, pulses, other. Infrared bands
// carry most of the between-crop contrast; the visible bands differ little.
const std::vector<CropProfile>& default_profiles();
const CropProfile& profile_by_name(const std::string& name);  // UsageError on unknown

}  // namespace cropsits::synth
