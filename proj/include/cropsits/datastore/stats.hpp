#pragma once

#include <string>
#include <vector>

#include "cropsits/datastore/bandstack.hpp"

namespace cropsits::data {

inline constexpr double kStdFloor = 1e-6;  // degenerate bands normalize to 0

// Per-band z-score parameters, fit on the training portion of a fold only
// so normalization never sees held-out parcels.
struct BandStats {
  std::vector<std::string> tokens;
  std::vector<double> mean;
  std::vector<double> stddev;  // population std, clamped to >= kStdFloor
};

// Moments over every pixel of every stack, on the combination's bands.
// Empty input is a contract error; a stack missing a band is an
// unknown-band error. The pointer overload fits without copying stacks
// that live inside larger structures.
BandStats fit_band_stats(const std::vector<BandStack>& stacks, const BandCombination& combo);
BandStats fit_band_stats(const std::vector<const BandStack*>& stacks,
                         const BandCombination& combo);

// (value - mean) / std per band. The stack's bands must equal the stats
// tokens in order.
BandStack apply_band_stats(const BandStack& stack, const BandStats& stats);

std::string band_stats_to_json(const BandStats& stats);
BandStats band_stats_from_json(const std::string& text);

}  // namespace cropsits::data
