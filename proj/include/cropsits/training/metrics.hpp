#pragma once

#include <cstdint>
#include <vector>

#include "cropsits/numcore/tensor.hpp"

namespace cropsits::train {

using num::Index;

// Confusion-matrix summary. Classes absent from both labels and predictions
// are excluded from the macro mean (their per_class slot stays 0 and
// included[c] is false).
struct F1Report {
  std::vector<double> per_class;
  std::vector<bool> included;
  double macro = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // [true class][predicted class]
};

F1Report macro_f1(const std::vector<Index>& predictions, const std::vector<Index>& labels,
                  Index k);

}  // namespace cropsits::train
