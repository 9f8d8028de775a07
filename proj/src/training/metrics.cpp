#include "cropsits/training/metrics.hpp"

#include <string>

#include "cropsits/error.hpp"

namespace cropsits::train {

F1Report macro_f1(const std::vector<Index>& predictions, const std::vector<Index>& labels,
                  Index k) {
  if (labels.empty()) throw ContractError("macro_f1: no samples");
  if (predictions.size() != labels.size())
    throw ContractError("macro_f1: " + std::to_string(predictions.size()) +
                        " predictions for " + std::to_string(labels.size()) + " labels");
  if (k < 1) throw ContractError("macro_f1: need at least one class");

  F1Report report;
  report.confusion.assign(static_cast<std::size_t>(k),
                          std::vector<std::int64_t>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Index y = labels[i], p = predictions[i];
    if (y < 0 || y >= k || p < 0 || p >= k)
      throw ContractError("macro_f1: class id out of range [0," + std::to_string(k) + ")");
    ++report.confusion[static_cast<std::size_t>(y)][static_cast<std::size_t>(p)];
  }

  report.per_class.assign(static_cast<std::size_t>(k), 0.0);
  report.included.assign(static_cast<std::size_t>(k), false);
  double sum = 0.0;
  Index counted = 0;
  for (Index c = 0; c < k; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    std::int64_t tp = report.confusion[ci][ci], fp = 0, fn = 0;
    for (Index o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += report.confusion[static_cast<std::size_t>(o)][ci];
      fn += report.confusion[ci][static_cast<std::size_t>(o)];
    }
    if (tp + fp + fn == 0) continue;  // class occurs nowhere: excluded from the mean
    report.included[ci] = true;
    const std::int64_t denom = 2 * tp + fp + fn;
    report.per_class[ci] =
        denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    sum += report.per_class[ci];
    ++counted;
  }
  report.macro = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return report;
}

}  // namespace cropsits::train
