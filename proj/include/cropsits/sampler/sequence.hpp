#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cropsits/datastore/bandstack.hpp"
#include "cropsits/numcore/tensor.hpp"

namespace cropsits::sampler {

using num::Index;
using num::Tensor;

// An unordered set of n pixels drawn from one chip: values[i] is the band
// vector of one source pixel. Distinct pixels without replacement whenever the
// chip has at least n; smaller chips contribute every pixel once and fill the
// rest with replacement.
struct PixelSet {
  Tensor<float> values;  // [n, B]
  int source_pixels = 0;
  std::uint64_t seed = 0;
};

PixelSet sample_pixel_set(const data::BandStack& stack, int n, std::uint64_t seed);

// One (parcel, season, satellite) time series, date-sorted and padded to a
// fixed length. Valid steps are front-packed; padded steps are all zero.
struct SequenceSample {
  std::string parcel_id;
  std::string season_id;
  std::string satellite;
  std::string label;        // from the source records; empty when unlabeled
  int label_index = -1;     // assigned once a class vocabulary is fixed
  int valid_len = 0;
  Tensor<float> values;     // [T_max, n, B]
  Tensor<float> mask;       // [T_max], 1 for valid steps
  std::vector<int> positions;  // 0..valid_len-1, then zeros for padding
};

// Sorts the records by date, samples a pixel set per record, and pads or
// uniformly subsamples to t_max steps (keeping source indices
// floor(i*count/t_max)). Pixel seeds derive from (seed, parcel, date), so the
// result is independent of input order and callers re-draw pixels per epoch
// by varying `seed`.
SequenceSample assemble_sequence(const std::vector<data::BandStack>& records, int t_max, int n,
                                 std::uint64_t seed);

// A stack of model inputs with consistent shapes: sequences [N,T,n,B] with
// [N,T] mask and positions, or chips [N,C,H,W] where both stay default-
// constructed.
struct SampleBatch {
  Tensor<float> values;
  Tensor<float> mask;
  Tensor<float> positions;
  std::vector<Index> labels;
  std::vector<float> weights;  // optional, empty or one per sample
};

// Requires every sample to share shapes and carry a label index.
SampleBatch batch_sequences(const std::vector<SequenceSample>& samples);

// Stacks whole chips as [N,C,H,W]; all chips must agree on bands and dims.
SampleBatch batch_chips(const std::vector<data::BandStack>& chips,
                        const std::vector<Index>& labels);

}  // namespace cropsits::sampler
