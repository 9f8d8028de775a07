#include <algorithm>
#include <numeric>

#include "cropsits/error.hpp"
#include "cropsits/rng.hpp"
#include "cropsits/sampler/sequence.hpp"

namespace cropsits::sampler {

PixelSet sample_pixel_set(const data::BandStack& stack, int n, std::uint64_t seed) {
  if (n <= 0) throw ContractError("sample_pixel_set: n must be positive");
  const int count = stack.height * stack.width;
  if (count <= 0) throw ContractError("sample_pixel_set: stack has no pixels");
  const int bands = stack.band_count();

  Rng rng(seed);
  std::vector<int> picks;
  picks.reserve(static_cast<std::size_t>(n));
  if (count >= n) {
    std::vector<int> order(static_cast<std::size_t>(count));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    picks.assign(order.begin(), order.begin() + n);
  } else {
    for (int p = 0; p < count; ++p) picks.push_back(p);
    for (int i = count; i < n; ++i)
      picks.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(count))));
  }

  PixelSet set;
  set.source_pixels = count;
  set.seed = seed;
  set.values = Tensor<float>::zeros({n, bands});
  for (int i = 0; i < n; ++i) {
    const int r = picks[static_cast<std::size_t>(i)] / stack.width;
    const int c = picks[static_cast<std::size_t>(i)] % stack.width;
    for (int b = 0; b < bands; ++b) set.values(i, b) = stack.at(b, r, c);
  }
  return set;
}

SequenceSample assemble_sequence(const std::vector<data::BandStack>& records, int t_max, int n,
                                 std::uint64_t seed) {
  if (records.empty()) throw ContractError("assemble_sequence: no records");
  if (t_max <= 0) throw ContractError("assemble_sequence: t_max must be positive");
  if (n <= 0) throw ContractError("assemble_sequence: n must be positive");

  const data::BandStack& first = records.front();
  for (const data::BandStack& r : records) {
    if (r.parcel_id != first.parcel_id || r.season_id != first.season_id ||
        r.satellite != first.satellite)
      throw ContractError("assemble_sequence: records mix parcels, seasons, or satellites");
    if (r.bands != first.bands)
      throw DimensionError("assemble_sequence: records disagree on bands");
    if (r.label != first.label)
      throw ContractError("assemble_sequence: records disagree on label");
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].date < records[b].date;  // ISO dates sort lexicographically
  });

  const std::int64_t count = static_cast<std::int64_t>(records.size());
  std::vector<std::size_t> kept;
  if (count > t_max) {
    kept.reserve(static_cast<std::size_t>(t_max));
    for (std::int64_t i = 0; i < t_max; ++i)
      kept.push_back(order[static_cast<std::size_t>(i * count / t_max)]);
  } else {
    kept = order;
  }

  SequenceSample sample;
  sample.parcel_id = first.parcel_id;
  sample.season_id = first.season_id;
  sample.satellite = first.satellite;
  sample.label = first.label.value_or("");
  sample.valid_len = static_cast<int>(kept.size());
  const int bands = first.band_count();
  sample.values = Tensor<float>::zeros({t_max, n, bands});
  sample.mask = Tensor<float>::zeros({t_max});
  sample.positions.assign(static_cast<std::size_t>(t_max), 0);

  for (int t = 0; t < sample.valid_len; ++t) {
    const data::BandStack& rec = records[kept[static_cast<std::size_t>(t)]];
    PixelSet set =
        sample_pixel_set(rec, n, mix_seed(seed, hash64(rec.parcel_id), hash64(rec.date)));
    for (int i = 0; i < n; ++i)
      for (int b = 0; b < bands; ++b) sample.values(t, i, b) = set.values(i, b);
    sample.mask[t] = 1.0f;
    sample.positions[static_cast<std::size_t>(t)] = t;
  }
  return sample;
}

SampleBatch batch_sequences(const std::vector<SequenceSample>& samples) {
  if (samples.empty()) throw ContractError("batch_sequences: no samples");
  const auto& shape = samples.front().values.shape();
  SampleBatch batch;
  batch.values = Tensor<float>::zeros({static_cast<Index>(samples.size()), shape[0], shape[1], shape[2]});
  batch.mask = Tensor<float>::zeros({static_cast<Index>(samples.size()), shape[0]});
  batch.positions = Tensor<float>::zeros({static_cast<Index>(samples.size()), shape[0]});
  batch.labels.reserve(samples.size());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const SequenceSample& sample = samples[s];
    if (sample.values.shape() != shape)
      throw DimensionError("batch_sequences: sample shapes disagree");
    if (sample.label_index < 0)
      throw ContractError("batch_sequences: sample for parcel '" + sample.parcel_id +
                          "' has no label index");
    if (static_cast<Index>(sample.positions.size()) != shape[0])
      throw ContractError("batch_sequences: sample for parcel '" + sample.parcel_id +
                          "' has " + std::to_string(sample.positions.size()) +
                          " positions for " + std::to_string(shape[0]) + " steps");
    const Index offset = static_cast<Index>(s) * sample.values.size();
    for (Index i = 0; i < sample.values.size(); ++i)
      batch.values[offset + i] = sample.values[i];
    for (Index t = 0; t < shape[0]; ++t) {
      batch.mask(static_cast<Index>(s), t) = sample.mask[t];
      batch.positions(static_cast<Index>(s), t) =
          static_cast<float>(sample.positions[static_cast<std::size_t>(t)]);
    }
    batch.labels.push_back(sample.label_index);
  }
  return batch;
}

SampleBatch batch_chips(const std::vector<data::BandStack>& chips,
                        const std::vector<Index>& labels) {
  if (chips.empty()) throw ContractError("batch_chips: no chips");
  if (labels.size() != chips.size())
    throw ContractError("batch_chips: " + std::to_string(chips.size()) + " chips but " +
                        std::to_string(labels.size()) + " labels");
  const data::BandStack& first = chips.front();
  SampleBatch batch;
  batch.values = Tensor<float>::zeros({static_cast<Index>(chips.size()), first.band_count(),
                                       first.height, first.width});
  for (std::size_t s = 0; s < chips.size(); ++s) {
    const data::BandStack& chip = chips[s];
    if (chip.bands != first.bands || chip.height != first.height || chip.width != first.width)
      throw DimensionError("batch_chips: chip shapes disagree");
    const Index offset = static_cast<Index>(s) * static_cast<Index>(chip.data.size());
    for (std::size_t i = 0; i < chip.data.size(); ++i)
      batch.values[offset + static_cast<Index>(i)] = chip.data[i];
  }
  batch.labels = labels;
  return batch;
}

}  // namespace cropsits::sampler
