#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace cropsits::sampler {

// What the splitter knows about a parcel. Location is any planar coordinate
// pair; for datasets without geometry, callers hash the parcel id into the
// unit square so the spatial stratifier still scatters the holdout.
struct ParcelInfo {
  std::string id;
  std::string label;
  double x = 0.0;
  double y = 0.0;
};

// Parcel-grouped split: a fixed test holdout plus k validation folds over the
// remaining parcels. All records of one parcel stay on one side of every
// boundary, so splitting here is what keeps train and test disjoint.
struct SplitPlan {
  std::uint64_t seed = 0;
  std::string stratification;
  std::vector<std::string> test_parcels;
  std::vector<std::vector<std::string>> folds;

  bool is_test(const std::string& parcel_id) const;
  // Index of the fold holding the parcel, or -1 when absent from all folds.
  int fold_of(const std::string& parcel_id) const;
};

// Throws ContractError (LeakageError when a parcel sits on both sides of the
// test boundary) if the plan is not a disjoint assignment.
void validate_split_plan(const SplitPlan& plan);

// Chooses `test_count` parcels by stratified sampling over (label, coarse
// spatial grid cell): proportional allocation to labels first, then to grid
// cells within each label, with seeded shuffles inside each cell. Any label
// whose share of the total rounds to at least one parcel is guaranteed test
// representation. Folds are left empty.
SplitPlan make_test_split(const std::vector<ParcelInfo>& parcels, int test_count,
                          std::uint64_t seed);

// Partitions `train_parcels` into k label-stratified folds whose sizes differ
// by at most one. Parcels of one label spread over consecutive folds, so a
// balanced universe yields perfectly balanced folds.
std::vector<std::vector<std::string>> make_kfold(const std::vector<ParcelInfo>& train_parcels,
                                                 int k, std::uint64_t seed);

// make_test_split + make_kfold over the remaining parcels, validated.
SplitPlan make_split_plan(const std::vector<ParcelInfo>& parcels, int test_count, int k,
                          std::uint64_t seed);

std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text, const std::string& origin);

// File IO with staged writes; read validates the plan before returning it.
void write_split_plan(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan read_split_plan(const std::filesystem::path& path);

}  // namespace cropsits::sampler
