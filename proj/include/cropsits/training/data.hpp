#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cropsits/datastore/bandstack.hpp"
#include "cropsits/datastore/stats.hpp"
#include "cropsits/sampler/sequence.hpp"

namespace cropsits::train {

using num::Index;

// One parcel's acquisitions for a season on one satellite, bands already
// selected into model order.
struct ParcelData {
  std::string parcel_id;
  Index label_index = -1;
  std::vector<data::BandStack> records;
};

struct Dataset {
  std::string satellite;
  data::BandCombination combo;           // tokens the model consumes, in order
  std::vector<std::string> class_names;  // sorted; label_index points here
  std::vector<ParcelData> parcels;       // sorted by parcel_id

  const ParcelData& parcel(const std::string& id) const;  // ContractError when absent
};

// Reads every `satellite` record of the manifest (optionally windowed by
// acquisition date, inclusive), selects `bands_text`, and groups chips by
// parcel. Labels index into the sorted distinct label names; unlabeled
// records are a contract error.
Dataset load_dataset(const std::filesystem::path& manifest_path, const std::string& satellite,
                     const std::string& bands_text,
                     const std::optional<std::pair<std::string, std::string>>& window = {});

// The date-sorted middle acquisition: the single-image representative of a
// parcel's season.
const data::BandStack& mid_season_chip(const ParcelData& parcel);

// Batches for the two model families. Chip batches stack mid-season
// acquisitions as [N,C,H,W]; sequence batches assemble padded pixel-set
// series as [N,T,n,B] with masks and positions.
sampler::SampleBatch chip_batch(const std::vector<const ParcelData*>& parcels);
sampler::SampleBatch sequence_batch(const std::vector<const ParcelData*>& parcels, int t_max,
                                    int n, std::uint64_t seed);

// Z-scores batch values in place with per-band moments fitted on training
// parcels. Padded sequence steps are normalized too, which is harmless: the
// temporal mask excludes them exactly.
void normalize_sequences(sampler::SampleBatch& batch, const data::BandStats& stats);
void normalize_chips(sampler::SampleBatch& batch, const data::BandStats& stats);

}  // namespace cropsits::train
