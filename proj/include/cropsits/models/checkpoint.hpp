#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cropsits/models/params.hpp"

namespace cropsits::models {

// Metadata saved beside every checkpoint: which model the weights belong to,
// its configuration, and where training stood when they were written.
struct CheckpointMeta {
  std::string model;               // "cnn" or "psetae"
  std::string config_json = "{}";  // model configuration as a serialized JSON object
  std::uint64_t seed = 0;
  int epoch = 0;
  std::map<std::string, double> metrics;
};

// Writes binary weights to `path` and metadata to `path` + ".json". Weights
// are float32 little-endian records in sorted name order; reloading returns
// bit-identical tensors.
void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const CheckpointMeta& meta);

ParameterSet<float> load_checkpoint(const std::filesystem::path& path,
                                    CheckpointMeta* meta = nullptr);

}  // namespace cropsits::models
