#include "cropsits/training/data.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "cropsits/datastore/manifest.hpp"
#include "cropsits/datastore/sensor.hpp"
#include "cropsits/error.hpp"

namespace cropsits::train {

const ParcelData& Dataset::parcel(const std::string& id) const {
  auto it = std::lower_bound(parcels.begin(), parcels.end(), id,
                             [](const ParcelData& p, const std::string& key) {
                               return p.parcel_id < key;
                             });
  if (it == parcels.end() || it->parcel_id != id)
    throw ContractError("Dataset: no parcel '" + id + "' on " + satellite);
  return *it;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& satellite,
                     const std::string& bands_text,
                     const std::optional<std::pair<std::string, std::string>>& window) {
  const data::SensorSpec& sensor = data::sensor_by_name(satellite);
  Dataset dataset;
  dataset.satellite = sensor.name;
  dataset.combo = data::parse_band_combination(bands_text, sensor);

  data::ManifestFilter filter;
  filter.satellite = sensor.name;
  filter.date_window = window;
  const std::vector<data::ManifestRecord> records =
      data::filter_manifest(data::read_manifest(manifest_path), filter);
  if (records.empty())
    throw ContractError("load_dataset: no " + sensor.name + " records in " +
                        manifest_path.string());

  const std::filesystem::path base = manifest_path.parent_path();
  std::map<std::string, ParcelData> grouped;
  std::map<std::string, std::string> labels;   // parcel -> label name
  std::map<std::string, std::string> seasons;  // parcel -> season id
  for (const data::ManifestRecord& rec : records) {
    if (rec.label.empty())
      throw ContractError("load_dataset: record " + rec.parcel_id + " " + rec.date +
                          " has no label");
    data::BandStack stack = data::read_bandstack(base / rec.path);
    if (stack.parcel_id != rec.parcel_id || stack.date != rec.date ||
        stack.satellite != rec.satellite)
      throw SchemaError("load_dataset: " + rec.path + " does not match its manifest row");
    auto [it, fresh] = grouped.try_emplace(rec.parcel_id);
    ParcelData& parcel = it->second;
    if (fresh) {
      parcel.parcel_id = rec.parcel_id;
      labels[rec.parcel_id] = rec.label;
      seasons[rec.parcel_id] = rec.season_id;
    } else {
      if (labels[rec.parcel_id] != rec.label)
        throw ContractError("load_dataset: parcel " + rec.parcel_id +
                            " carries two labels; one crop per season expected");
      if (seasons[rec.parcel_id] != rec.season_id)
        throw ContractError("load_dataset: parcel " + rec.parcel_id +
                            " spans two seasons; split one series per season");
    }
    parcel.records.push_back(data::select_bands(stack, dataset.combo));
  }

  std::set<std::string> names;
  for (const auto& [id, label] : labels) names.insert(label);
  dataset.class_names.assign(names.begin(), names.end());
  auto class_index = [&](const std::string& name) {
    return static_cast<Index>(std::lower_bound(dataset.class_names.begin(),
                                               dataset.class_names.end(), name) -
                              dataset.class_names.begin());
  };
  dataset.parcels.reserve(grouped.size());
  for (auto& [id, parcel] : grouped) {
    parcel.label_index = class_index(labels[id]);
    dataset.parcels.push_back(std::move(parcel));
  }
  return dataset;
}

const data::BandStack& mid_season_chip(const ParcelData& parcel) {
  if (parcel.records.empty())
    throw ContractError("mid_season_chip: parcel " + parcel.parcel_id + " has no records");
  std::vector<std::size_t> order(parcel.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return parcel.records[a].date < parcel.records[b].date;
  });
  return parcel.records[order[order.size() / 2]];
}

sampler::SampleBatch chip_batch(const std::vector<const ParcelData*>& parcels) {
  if (parcels.empty()) throw ContractError("chip_batch: no parcels");
  std::vector<data::BandStack> chips;
  std::vector<Index> labels;
  chips.reserve(parcels.size());
  labels.reserve(parcels.size());
  for (const ParcelData* parcel : parcels) {
    chips.push_back(mid_season_chip(*parcel));
    labels.push_back(parcel->label_index);
  }
  return sampler::batch_chips(chips, labels);
}

sampler::SampleBatch sequence_batch(const std::vector<const ParcelData*>& parcels, int t_max,
                                    int n, std::uint64_t seed) {
  if (parcels.empty()) throw ContractError("sequence_batch: no parcels");
  std::vector<sampler::SequenceSample> samples;
  samples.reserve(parcels.size());
  for (const ParcelData* parcel : parcels) {
    sampler::SequenceSample sample = sampler::assemble_sequence(parcel->records, t_max, n, seed);
    sample.label_index = parcel->label_index;
    samples.push_back(std::move(sample));
  }
  return sampler::batch_sequences(samples);
}

namespace {

void normalize_axis(sampler::SampleBatch& batch, const data::BandStats& stats, Index bands,
                    Index band_stride, const char* what) {
  if (static_cast<Index>(stats.tokens.size()) != bands)
    throw ContractError(std::string(what) + ": " + std::to_string(stats.tokens.size()) +
                        " fitted bands for " + std::to_string(bands) + " value channels");
  auto values = batch.values.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t b =
        (i / static_cast<std::size_t>(band_stride)) % static_cast<std::size_t>(bands);
    values[i] = static_cast<float>((values[i] - stats.mean[b]) / stats.stddev[b]);
  }
}

}  // namespace

void normalize_sequences(sampler::SampleBatch& batch, const data::BandStats& stats) {
  const auto& shape = batch.values.shape();
  if (shape.size() != 4)
    throw ContractError("normalize_sequences: expected [N,T,n,B] values");
  normalize_axis(batch, stats, shape[3], 1, "normalize_sequences");
}

void normalize_chips(sampler::SampleBatch& batch, const data::BandStats& stats) {
  const auto& shape = batch.values.shape();
  if (shape.size() != 4)
    throw ContractError("normalize_chips: expected [N,C,H,W] values");
  normalize_axis(batch, stats, shape[1], shape[2] * shape[3], "normalize_chips");
}

}  // namespace cropsits::train
