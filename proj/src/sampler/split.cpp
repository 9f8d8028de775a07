#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <unordered_map>
#include <unordered_set>

#include "cropsits/error.hpp"
#include "cropsits/rng.hpp"
#include "cropsits/sampler/split.hpp"

namespace cropsits::sampler {
namespace {

constexpr int kGridDim = 4;  // coarse spatial stratifier: 4x4 cells over the bbox

// Largest-remainder apportionment of `total` seats over groups of the given
// sizes. Exact integer arithmetic; ties go to the larger group, then to the
// lower index. Allocations never exceed group sizes as long as
// total <= sum(sizes).
std::vector<std::int64_t> apportion(const std::vector<std::int64_t>& sizes, std::int64_t total) {
  std::int64_t n = 0;
  for (std::int64_t s : sizes) n += s;
  std::vector<std::int64_t> alloc(sizes.size(), 0);
  std::vector<std::int64_t> rem(sizes.size(), 0);
  std::int64_t given = 0;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    alloc[g] = total * sizes[g] / n;
    rem[g] = total * sizes[g] % n;
    given += alloc[g];
  }
  std::vector<std::size_t> order(sizes.size());
  for (std::size_t g = 0; g < order.size(); ++g) order[g] = g;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rem[a] != rem[b]) return rem[a] > rem[b];
    if (sizes[a] != sizes[b]) return sizes[a] > sizes[b];
    return a < b;
  });
  for (std::size_t g = 0; given < total; ++g) {
    alloc[order[g]] += 1;
    ++given;
  }
  return alloc;
}

int grid_cell(const ParcelInfo& p, double min_x, double min_y, double span_x, double span_y) {
  int gx = std::min(kGridDim - 1, static_cast<int>((p.x - min_x) / span_x * kGridDim));
  int gy = std::min(kGridDim - 1, static_cast<int>((p.y - min_y) / span_y * kGridDim));
  return gy * kGridDim + gx;
}

void check_unique_ids(const std::vector<ParcelInfo>& parcels, const char* where) {
  std::unordered_set<std::string> seen;
  seen.reserve(parcels.size());
  for (const ParcelInfo& p : parcels)
    if (!seen.insert(p.id).second)
      throw ContractError(std::string(where) + ": duplicate parcel id '" + p.id + "'");
}

}  // namespace

bool SplitPlan::is_test(const std::string& parcel_id) const {
  return std::find(test_parcels.begin(), test_parcels.end(), parcel_id) != test_parcels.end();
}

int SplitPlan::fold_of(const std::string& parcel_id) const {
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (std::find(folds[f].begin(), folds[f].end(), parcel_id) != folds[f].end())
      return static_cast<int>(f);
  return -1;
}

void validate_split_plan(const SplitPlan& plan) {
  std::unordered_set<std::string> test_set;
  for (const std::string& id : plan.test_parcels)
    if (!test_set.insert(id).second)
      throw ContractError("split plan lists test parcel '" + id + "' twice");
  std::unordered_set<std::string> fold_set;
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    for (const std::string& id : plan.folds[f]) {
      if (test_set.count(id))
        throw LeakageError("parcel '" + id + "' is in both the test set and fold " +
                           std::to_string(f));
      if (!fold_set.insert(id).second)
        throw ContractError("parcel '" + id + "' appears in more than one fold");
    }
  }
}

SplitPlan make_test_split(const std::vector<ParcelInfo>& parcels, int test_count,
                          std::uint64_t seed) {
  if (parcels.empty()) throw ContractError("make_test_split: no parcels");
  if (test_count <= 0) throw ContractError("make_test_split: test_count must be positive");
  if (test_count >= static_cast<int>(parcels.size()))
    throw ContractError("make_test_split: test_count " + std::to_string(test_count) +
                        " must be below the parcel count " + std::to_string(parcels.size()));
  check_unique_ids(parcels, "make_test_split");

  double min_x = parcels[0].x, max_x = parcels[0].x;
  double min_y = parcels[0].y, max_y = parcels[0].y;
  for (const ParcelInfo& p : parcels) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  double span_x = max_x > min_x ? max_x - min_x : 1.0;
  double span_y = max_y > min_y ? max_y - min_y : 1.0;

  // label -> cell -> parcel ids, sorted, so the result is a function of the
  // parcel set rather than its order.
  std::map<std::string, std::map<int, std::vector<std::string>>> strata;
  for (const ParcelInfo& p : parcels)
    strata[p.label][grid_cell(p, min_x, min_y, span_x, span_y)].push_back(p.id);

  std::vector<std::int64_t> label_sizes;
  for (auto& [label, cells] : strata) {
    std::int64_t size = 0;
    for (auto& [cell, ids] : cells) {
      std::sort(ids.begin(), ids.end());
      size += static_cast<std::int64_t>(ids.size());
    }
    label_sizes.push_back(size);
  }
  std::vector<std::int64_t> label_alloc = apportion(label_sizes, test_count);

  SplitPlan plan;
  plan.seed = seed;
  plan.stratification = "label x 4x4 grid";
  std::size_t li = 0;
  for (auto& [label, cells] : strata) {
    std::int64_t want = label_alloc[li++];
    if (want == 0) continue;
    std::vector<std::int64_t> cell_sizes;
    for (auto& [cell, ids] : cells) cell_sizes.push_back(static_cast<std::int64_t>(ids.size()));
    std::vector<std::int64_t> cell_alloc = apportion(cell_sizes, want);
    std::size_t ci = 0;
    for (auto& [cell, ids] : cells) {
      std::int64_t take = cell_alloc[ci++];
      if (take == 0) continue;
      Rng rng(mix_seed(seed, hash64(label), static_cast<std::uint64_t>(cell)));
      rng.shuffle(ids);
      for (std::int64_t i = 0; i < take; ++i) plan.test_parcels.push_back(ids[i]);
    }
  }
  std::sort(plan.test_parcels.begin(), plan.test_parcels.end());
  return plan;
}

std::vector<std::vector<std::string>> make_kfold(const std::vector<ParcelInfo>& train_parcels,
                                                 int k, std::uint64_t seed) {
  if (k <= 0) throw ContractError("make_kfold: k must be positive");
  if (k > static_cast<int>(train_parcels.size()))
    throw ContractError("make_kfold: k=" + std::to_string(k) + " exceeds the " +
                        std::to_string(train_parcels.size()) + " train parcels");
  check_unique_ids(train_parcels, "make_kfold");

  std::map<std::string, std::vector<std::string>> by_label;
  for (const ParcelInfo& p : train_parcels) by_label[p.label].push_back(p.id);

  // Deal parcels one at a time into folds, carrying the fold pointer across
  // label groups: fold sizes differ by at most one overall, and each label is
  // spread over consecutive folds.
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  for (auto& [label, ids] : by_label) {
    std::sort(ids.begin(), ids.end());
    Rng rng(mix_seed(seed, hash64(label)));
    rng.shuffle(ids);
    for (std::string& id : ids) {
      folds[next].push_back(std::move(id));
      next = (next + 1) % folds.size();
    }
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

SplitPlan make_split_plan(const std::vector<ParcelInfo>& parcels, int test_count, int k,
                          std::uint64_t seed) {
  SplitPlan plan = make_test_split(parcels, test_count, seed);
  std::unordered_set<std::string> test_set(plan.test_parcels.begin(), plan.test_parcels.end());
  std::vector<ParcelInfo> train;
  train.reserve(parcels.size() - plan.test_parcels.size());
  for (const ParcelInfo& p : parcels)
    if (!test_set.count(p.id)) train.push_back(p);
  plan.folds = make_kfold(train, k, mix_seed(seed, hash64("folds")));
  validate_split_plan(plan);
  return plan;
}

std::string split_plan_to_json(const SplitPlan& plan) {
  nlohmann::json j;
  j["seed"] = plan.seed;
  j["stratification"] = plan.stratification;
  j["test_parcels"] = plan.test_parcels;
  j["folds"] = plan.folds;
  return j.dump(2) + "\n";
}

SplitPlan split_plan_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": " + e.what());
  }
  SplitPlan plan;
  try {
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.test_parcels = j.at("test_parcels").get<std::vector<std::string>>();
    plan.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    plan.stratification = j.value("stratification", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": " + e.what());
  }
  validate_split_plan(plan);
  return plan;
}

void write_split_plan(const SplitPlan& plan, const std::filesystem::path& path) {
  validate_split_plan(plan);
  const std::string text = split_plan_to_json(plan);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f << text;
    f.flush();
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

SplitPlan read_split_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return split_plan_from_json(text, path.string());
}

}  // namespace cropsits::sampler
