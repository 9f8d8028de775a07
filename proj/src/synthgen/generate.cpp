#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cropsits/datastore/date.hpp"
#include "cropsits/datastore/manifest.hpp"
#include "cropsits/error.hpp"
#include "cropsits/rng.hpp"
#include "cropsits/synthgen/generate.hpp"

namespace cropsits::synth {
namespace {

constexpr double kPi = 3.14159265358979323846;

std::string parcel_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "parcel_%04d", index);
  return buf;
}

}  // namespace

ParcelSeries generate_parcel_series(const CropProfile& profile, const SceneConfig& config,
                                    const std::string& parcel_id, std::uint64_t seed) {
  profile.validate();
  const int grid = config.native_grid;
  const int pixels = grid * grid;
  const auto& tokens = native_tokens();

  Rng start_rng(mix_seed(seed, hash64("start")));
  const int sow_span = profile.sow_doy_max - profile.sow_doy_min + 1;
  const int start_doy =
      profile.sow_doy_min + static_cast<int>(start_rng.next_below(static_cast<std::uint64_t>(sow_span)));

  // One endmember draw per parcel: fields of the same crop differ a little.
  Rng spectrum_rng(mix_seed(seed, hash64("spectrum")));
  std::map<std::string, double> veg;
  for (const std::string& token : mixed_tokens()) {
    const double jittered =
        profile.veg.at(token) + profile.spectral_jitter * spectrum_rng.next_normal();
    veg[token] = std::clamp(jittered, 0.0, 1.5);
  }

  // A static heterogeneity field: some pixels run ahead of the parcel mean.
  Rng cover_rng(mix_seed(seed, hash64("cover")));
  std::vector<double> pixel_gain(static_cast<std::size_t>(pixels));
  for (double& g : pixel_gain) g = 1.0 + config.cover_jitter * cover_rng.next_normal();

  ParcelSeries series;
  series.parcel_id = parcel_id;
  series.label = profile.name;
  series.season_id = std::to_string(config.season_year);
  series.start_day = data::days_from_civil(config.season_year, 1, 1) + start_doy - 1;
  series.grid = grid;
  series.days.resize(static_cast<std::size_t>(profile.season_days));

  for (int d = 0; d < profile.season_days; ++d) {
    std::vector<float>& frame = series.days[static_cast<std::size_t>(d)];
    frame.resize(tokens.size() * static_cast<std::size_t>(pixels));

    const double v = cover_fraction(static_cast<double>(d), profile.phenology);

    // Thermal and cirrus proxies track the calendar only; no crop signal.
    Rng thermal_rng(mix_seed(seed, hash64("thermal"), static_cast<std::uint64_t>(d)));
    const double doy = static_cast<double>(start_doy + d);
    const double tirs1 =
        0.55 + 0.25 * std::sin(2.0 * kPi * doy / 365.0) + 0.05 * thermal_rng.next_normal();
    const double tirs2 = tirs1 - 0.02;
    const double cirrus = std::max(0.0, 0.04 + 0.03 * thermal_rng.next_normal());

    for (std::size_t b = 0; b < tokens.size(); ++b) {
      float* plane = frame.data() + b * static_cast<std::size_t>(pixels);
      const std::string& token = tokens[b];
      if (token == "TIRS1" || token == "TIRS2" || token == "CIRRUS") {
        const double value = token == "TIRS1" ? tirs1 : (token == "TIRS2" ? tirs2 : cirrus);
        std::fill(plane, plane + pixels, static_cast<float>(value));
        continue;
      }
      const double soil = soil_spectrum().at(token);
      const double leaf = veg.at(token);
      for (int p = 0; p < pixels; ++p) {
        const double c = std::clamp(v * pixel_gain[static_cast<std::size_t>(p)], 0.0, 1.0);
        plane[p] = static_cast<float>((1.0 - c) * soil + c * leaf);
      }
    }
  }
  return series;
}

std::vector<float> block_average(const float* plane, int grid, int k) {
  std::vector<float> out(static_cast<std::size_t>(k) * static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int r0 = i * grid / k, r1 = (i + 1) * grid / k;
    for (int j = 0; j < k; ++j) {
      const int c0 = j * grid / k, c1 = (j + 1) * grid / k;
      double sum = 0.0;
      for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) sum += plane[r * grid + c];
      out[static_cast<std::size_t>(i * k + j)] =
          static_cast<float>(sum / ((r1 - r0) * (c1 - c0)));
    }
  }
  return out;
}

data::BandStack emit_chip(const ParcelSeries& series, const data::SensorSpec& sensor,
                          int day_index, double noise_sigma, std::uint64_t noise_seed) {
  if (day_index < 0 || day_index >= series.day_count())
    throw ContractError("emit_chip: day " + std::to_string(day_index) + " outside the season");
  const int k = sensor.chip_h;

  data::BandStack chip;
  chip.parcel_id = series.parcel_id;
  chip.satellite = sensor.name;
  chip.date = data::format_date(series.start_day + day_index);
  chip.season_id = series.season_id;
  chip.height = k;
  chip.width = k;
  chip.bands = sensor.bands;
  chip.label = series.label;
  chip.data.resize(sensor.bands.size() * static_cast<std::size_t>(k) * static_cast<std::size_t>(k));

  Rng noise(noise_seed);
  std::size_t out = 0;
  for (const std::string& token : sensor.bands) {
    const int b = native_band_index(token);
    if (b < 0) throw ContractError("emit_chip: no native band " + token);
    std::vector<float> averaged = block_average(series.plane(day_index, b), series.grid, k);
    for (float value : averaged)
      chip.data[out++] = value + static_cast<float>(noise_sigma * noise.next_normal());
  }
  return chip;
}

DatasetSummary generate_dataset(const SceneConfig& config, const std::filesystem::path& out_dir) {
  config.validate();

  // Crops keep their stock order so rank-based weights mean what they say.
  std::vector<std::pair<const CropProfile*, double>> crops;
  for (const CropProfile& profile : default_profiles()) {
    if (config.crop_weights.empty()) {
      crops.emplace_back(&profile, 1.0);
    } else if (auto it = config.crop_weights.find(profile.name); it != config.crop_weights.end()) {
      crops.emplace_back(&profile, it->second);
    }
  }
  double total_weight = 0.0;
  for (const auto& [profile, weight] : crops) total_weight += weight;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  for (const std::string& sat : config.satellites) {
    std::filesystem::create_directories(out_dir / sat, ec);
    if (ec) throw IoError("cannot create " + (out_dir / sat).string() + ": " + ec.message());
  }

  DatasetSummary summary;
  std::map<std::string, std::vector<data::ManifestRecord>> manifests;
  for (const std::string& sat : config.satellites) manifests[sat];

  for (int p = 0; p < config.parcels; ++p) {
    const std::string pid = parcel_name(p);
    const std::uint64_t parcel_seed = mix_seed(config.seed, hash64(pid));

    Rng crop_rng(mix_seed(parcel_seed, hash64("crop")));
    double u = crop_rng.next_unit() * total_weight;
    const CropProfile* profile = crops.back().first;
    for (const auto& [candidate, weight] : crops) {
      if (u < weight) {
        profile = candidate;
        break;
      }
      u -= weight;
    }
    summary.labels[profile->name] += 1;

    const ParcelSeries series = generate_parcel_series(*profile, config, pid, parcel_seed);

    for (const std::string& sat : config.satellites) {
      const data::SensorSpec& sensor = data::sensor_by_name(sat);
      const double drop = config.dropout_for(sat);
      const double sigma = config.noise_for(sat);
      for (int d = 0; d < series.day_count(); d += sensor.revisit_days) {
        Rng acq(mix_seed(parcel_seed, hash64(sat), static_cast<std::uint64_t>(d)));
        if (acq.next_unit() < drop) continue;
        data::BandStack chip = emit_chip(series, sensor, d, sigma, acq.next_u64());
        const std::string rel = sat + "/" + pid + "_" + chip.date + ".bsf";
        data::write_bandstack(chip, out_dir / rel);

        data::ManifestRecord record;
        record.path = rel;
        record.parcel_id = pid;
        record.satellite = sat;
        record.date = chip.date;
        record.season_id = chip.season_id;
        record.label = *chip.label;
        record.height = chip.height;
        record.width = chip.width;
        manifests[sat].push_back(std::move(record));
        summary.records[sat] += 1;
      }
    }
  }

  for (const std::string& sat : config.satellites) {
    const auto path = out_dir / ("manifest_" + sat + ".jsonl");
    data::write_manifest(manifests[sat], path);
    summary.manifests[sat] = path;
  }
  summary.config_path = out_dir / "scene.json";
  {
    const std::string text = scene_config_to_json(config);
    const auto tmp = summary.config_path.string() + ".tmp";
    FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
    std::fclose(f);
    if (!ok) throw IoError("short write to " + tmp);
    std::filesystem::rename(tmp, summary.config_path, ec);
    if (ec)
      throw IoError("cannot move " + tmp + " to " + summary.config_path.string() + ": " +
                    ec.message());
  }
  return summary;
}

}  // namespace cropsits::synth
