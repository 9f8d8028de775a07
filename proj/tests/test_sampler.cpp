#include <algorithm>
#include <bit>
#include <catch2/catch.hpp>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "cropsits/datastore/date.hpp"
#include "cropsits/error.hpp"
#include "cropsits/rng.hpp"
#include "cropsits/sampler/sequence.hpp"
#include "cropsits/sampler/split.hpp"

using cropsits::ContractError;
using cropsits::DimensionError;
using cropsits::FormatError;
using cropsits::LeakageError;
using cropsits::Rng;
using cropsits::SchemaError;
using cropsits::data::BandStack;
using cropsits::num::Index;
using cropsits::num::Tensor;
using namespace cropsits::sampler;

namespace {

std::vector<ParcelInfo> random_universe(int parcels, int labels, Rng& rng) {
  std::vector<ParcelInfo> out;
  out.reserve(static_cast<std::size_t>(parcels));
  for (int i = 0; i < parcels; ++i) {
    ParcelInfo p;
    p.id = "P" + std::to_string(i);
    p.label = "crop" + std::to_string(rng.next_below(static_cast<std::uint64_t>(labels)));
    p.x = rng.next_unit();
    p.y = rng.next_unit();
    out.push_back(std::move(p));
  }
  return out;
}

// One parcel per (label, count) pair, scattered over the unit square.
std::vector<ParcelInfo> universe_with_counts(const std::vector<int>& counts, Rng& rng) {
  std::vector<ParcelInfo> out;
  for (std::size_t l = 0; l < counts.size(); ++l) {
    for (int i = 0; i < counts[l]; ++i) {
      ParcelInfo p;
      p.id = "L" + std::to_string(l) + "-" + std::to_string(i);
      p.label = "crop" + std::to_string(l);
      p.x = rng.next_unit();
      p.y = rng.next_unit();
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Chip whose pixel vectors are pairwise distinct: value = base + b*1e4 + r*1e2 + c.
BandStack make_chip(const std::string& parcel, const std::string& date, int h, int w,
                    const std::vector<std::string>& bands, float base) {
  BandStack s;
  s.parcel_id = parcel;
  s.satellite = "PS";
  s.date = date;
  s.season_id = "s2020";
  s.height = h;
  s.width = w;
  s.bands = bands;
  s.label = "paddy";
  s.data.resize(bands.size() * static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
  for (int b = 0; b < s.band_count(); ++b)
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) s.at(b, r, c) = base + 10000.0f * b + 100.0f * r + c;
  return s;
}

std::vector<float> pixel_vector(const BandStack& s, int r, int c) {
  std::vector<float> v;
  for (int b = 0; b < s.band_count(); ++b) v.push_back(s.at(b, r, c));
  return v;
}

std::vector<float> row_vector(const Tensor<float>& values, Index row) {
  std::vector<float> v;
  for (Index b = 0; b < values.dim(1); ++b) v.push_back(values(row, b));
  return v;
}

bool same_floats(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.shape() != b.shape()) return false;
  for (Index i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  return true;
}

std::string iso_after(int year, int month, int day, std::int64_t offset) {
  return cropsits::data::format_date(cropsits::data::days_from_civil(year, month, day) + offset);
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("cropsits_sampler_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("test split holds out the requested parcel count") {
  Rng rng(11);
  auto parcels = random_universe(172, 5, rng);
  SplitPlan plan = make_test_split(parcels, 35, 99);

  REQUIRE(plan.test_parcels.size() == 35);
  std::unordered_set<std::string> ids;
  for (const auto& p : parcels) ids.insert(p.id);
  std::unordered_set<std::string> test_set;
  for (const auto& id : plan.test_parcels) {
    REQUIRE(ids.count(id) == 1);
    REQUIRE(test_set.insert(id).second);
  }
  int train = 0;
  for (const auto& p : parcels)
    if (!test_set.count(p.id)) ++train;
  REQUIRE(train == 137);
  REQUIRE(plan.folds.empty());
}

TEST_CASE("test split is deterministic and covers every sizeable label") {
  Rng rng(12);
  SECTION("same seed, same plan; new seed, new plan") {
    auto parcels = random_universe(80, 4, rng);
    SplitPlan a = make_test_split(parcels, 20, 7);
    SplitPlan b = make_test_split(parcels, 20, 7);
    REQUIRE(a.test_parcels == b.test_parcels);
    SplitPlan c = make_test_split(parcels, 20, 8);
    REQUIRE(a.test_parcels != c.test_parcels);
  }
  SECTION("balanced universe: every label lands in test, close to its share") {
    auto parcels = universe_with_counts({30, 30, 30, 30, 30}, rng);
    SplitPlan plan = make_test_split(parcels, 35, 3);
    std::map<std::string, int> per_label;
    for (std::size_t l = 0; l < 5; ++l) per_label["crop" + std::to_string(l)] = 0;
    for (const auto& id : plan.test_parcels) per_label["crop" + id.substr(1, 1)] += 1;
    for (const auto& [label, count] : per_label) {
      REQUIRE(count >= 1);
      REQUIRE(std::abs(count - 7) <= 1);  // proportional share of 35 over 5 equal labels
    }
  }
  SECTION("skewed universe: a five-parcel label still reaches test") {
    // 172 parcels, 35 test: a label needs ceil(172/35) = 5 parcels for its
    // proportional share to round up to one seat.
    auto parcels = universe_with_counts({5, 30, 60, 40, 37}, rng);
    SplitPlan plan = make_test_split(parcels, 35, 4);
    std::map<std::string, int> per_label;
    for (const auto& id : plan.test_parcels) per_label[id.substr(0, 2)] += 1;
    for (std::size_t l = 0; l < 5; ++l) REQUIRE(per_label["L" + std::to_string(l)] >= 1);
  }
}

TEST_CASE("test split rejects impossible requests") {
  Rng rng(13);
  auto parcels = random_universe(10, 2, rng);
  REQUIRE_THROWS_AS(make_test_split(parcels, 0, 1), ContractError);
  REQUIRE_THROWS_AS(make_test_split(parcels, -3, 1), ContractError);
  REQUIRE_THROWS_AS(make_test_split(parcels, 10, 1), ContractError);
  REQUIRE_THROWS_AS(make_test_split(parcels, 11, 1), ContractError);
  REQUIRE_THROWS_WITH(make_test_split(parcels, 10, 1), Catch::Contains("test_count"));

  auto dup = parcels;
  dup[4].id = dup[2].id;
  REQUIRE_THROWS_AS(make_test_split(dup, 3, 1), ContractError);
}

TEST_CASE("five folds partition ten parcels into pairs") {
  Rng rng(14);
  auto parcels = random_universe(10, 3, rng);
  auto folds = make_kfold(parcels, 5, 21);
  REQUIRE(folds.size() == 5);
  std::set<std::string> seen;
  for (const auto& fold : folds) {
    REQUIRE(fold.size() == 2);
    for (const auto& id : fold) REQUIRE(seen.insert(id).second);
  }
  REQUIRE(seen.size() == 10);
}

TEST_CASE("folds are label-stratified") {
  Rng rng(15);
  // Five labels with five parcels each: dealing spreads every label across
  // all five folds, so each fold gets exactly one parcel per label.
  auto parcels = universe_with_counts({5, 5, 5, 5, 5}, rng);
  auto folds = make_kfold(parcels, 5, 3);
  for (const auto& fold : folds) {
    REQUIRE(fold.size() == 5);
    std::set<std::string> labels;
    for (const auto& id : fold) labels.insert(id.substr(0, 2));
    REQUIRE(labels.size() == 5);
  }
}

TEST_CASE("kfold rejects more folds than parcels") {
  Rng rng(16);
  auto parcels = random_universe(4, 2, rng);
  REQUIRE_THROWS_AS(make_kfold(parcels, 5, 1), ContractError);
  REQUIRE_THROWS_AS(make_kfold(parcels, 0, 1), ContractError);
  REQUIRE_THROWS_AS(make_kfold(parcels, -1, 1), ContractError);
  REQUIRE(make_kfold(parcels, 4, 1).size() == 4);
}

TEST_CASE("split plans hold their invariants across random universes") {
  Rng rng(17);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 10 + static_cast<int>(rng.next_below(51));
    const int labels = 1 + static_cast<int>(rng.next_below(4));
    const int test_count = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - 6)));
    const std::uint64_t seed = rng.next_u64();
    auto parcels = random_universe(n, labels, rng);

    SplitPlan plan = make_split_plan(parcels, test_count, 5, seed);
    REQUIRE(static_cast<int>(plan.test_parcels.size()) == test_count);
    REQUIRE(plan.folds.size() == 5);

    // Folds partition the non-test parcels; sizes differ by at most one.
    std::map<std::string, int> appearances;
    std::size_t fold_min = parcels.size(), fold_max = 0;
    for (const auto& fold : plan.folds) {
      fold_min = std::min(fold_min, fold.size());
      fold_max = std::max(fold_max, fold.size());
      for (const auto& id : fold) appearances[id] += 1;
    }
    REQUIRE(fold_max - fold_min <= 1);
    std::unordered_set<std::string> test_set(plan.test_parcels.begin(), plan.test_parcels.end());
    int expected_train = 0;
    for (const auto& p : parcels) {
      if (test_set.count(p.id)) {
        REQUIRE(appearances.count(p.id) == 0);
      } else {
        ++expected_train;
        REQUIRE(appearances[p.id] == 1);
      }
    }
    REQUIRE(static_cast<int>(appearances.size()) == expected_train);

    SplitPlan again = make_split_plan(parcels, test_count, 5, seed);
    REQUIRE(again.test_parcels == plan.test_parcels);
    REQUIRE(again.folds == plan.folds);
  }
}

TEST_CASE("a parcel lands in exactly one fold no matter how many images it has") {
  Rng rng(18);
  auto parcels = random_universe(30, 3, rng);
  // Forty images of parcel P7 exist only in manifests; splitting ignores them.
  SplitPlan plan = make_split_plan(parcels, 6, 5, 2);
  int appearances = plan.is_test("P7") ? 1 : 0;
  for (const auto& fold : plan.folds)
    appearances += static_cast<int>(std::count(fold.begin(), fold.end(), "P7"));
  REQUIRE(appearances == 1);
}

TEST_CASE("split plans round-trip through JSON") {
  Rng rng(19);
  auto parcels = random_universe(40, 3, rng);
  SplitPlan plan = make_split_plan(parcels, 8, 5, 31);

  TempDir dir;
  const auto path = dir.path / "splits.json";
  write_split_plan(plan, path);
  SplitPlan loaded = read_split_plan(path);
  REQUIRE(loaded.seed == plan.seed);
  REQUIRE(loaded.stratification == plan.stratification);
  REQUIRE(loaded.test_parcels == plan.test_parcels);
  REQUIRE(loaded.folds == plan.folds);

  SECTION("malformed text is a format error") {
    REQUIRE_THROWS_AS(split_plan_from_json("{nope", "x"), FormatError);
  }
  SECTION("missing fields are schema errors") {
    REQUIRE_THROWS_AS(split_plan_from_json("{\"seed\": 1}", "x"), SchemaError);
  }
  SECTION("a parcel on both sides of the test boundary is leakage") {
    const char* leaky =
        "{\"seed\": 1, \"test_parcels\": [\"a\"], \"folds\": [[\"a\"], [\"b\"]]}";
    REQUIRE_THROWS_AS(split_plan_from_json(leaky, "x"), LeakageError);
  }
}

TEST_CASE("pixel sets cover small chips exactly") {
  const std::vector<std::string> ps_bands = {"B", "G", "R", "NIR"};
  SECTION("a 3x3 chip sampled at n=9 uses each pixel once") {
    BandStack chip = make_chip("p1", "2020-05-01", 3, 3, ps_bands, 0.0f);
    PixelSet set = sample_pixel_set(chip, 9, 5);
    REQUIRE(set.values.shape() == std::vector<Index>{9, 4});
    REQUIRE(set.source_pixels == 9);
    std::multiset<std::vector<float>> expected, got;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) expected.insert(pixel_vector(chip, r, c));
    for (Index i = 0; i < 9; ++i) got.insert(row_vector(set.values, i));
    REQUIRE(expected == got);
  }
  SECTION("a one-pixel chip sampled at n=3 repeats that pixel") {
    BandStack chip = make_chip("p1", "2020-05-01", 1, 1, ps_bands, 7.0f);
    PixelSet set = sample_pixel_set(chip, 3, 5);
    for (Index i = 0; i < 3; ++i) REQUIRE(row_vector(set.values, i) == pixel_vector(chip, 0, 0));
  }
  SECTION("a 19x19 chip sampled at n=300 has 300 distinct pixels") {
    BandStack chip = make_chip("p1", "2020-05-01", 19, 19, ps_bands, 0.0f);
    PixelSet set = sample_pixel_set(chip, 300, 5);
    std::set<std::vector<float>> rows;
    for (Index i = 0; i < 300; ++i) rows.insert(row_vector(set.values, i));
    REQUIRE(rows.size() == 300);
  }
}

TEST_CASE("pixel sampling is a pure function of the seed") {
  BandStack chip = make_chip("p1", "2020-05-01", 19, 19, {"B", "G", "R", "NIR"}, 0.0f);
  PixelSet a = sample_pixel_set(chip, 300, 77);
  PixelSet b = sample_pixel_set(chip, 300, 77);
  REQUIRE(same_floats(a.values, b.values));
  PixelSet c = sample_pixel_set(chip, 300, 78);
  REQUIRE_FALSE(same_floats(a.values, c.values));
  REQUIRE_THROWS_AS(sample_pixel_set(chip, 0, 1), ContractError);
  REQUIRE_THROWS_AS(sample_pixel_set(chip, -2, 1), ContractError);
}

TEST_CASE("pixel set rows always come from the source pixels") {
  Rng rng(20);
  for (int rep = 0; rep < 200; ++rep) {
    const int h = 1 + static_cast<int>(rng.next_below(6));
    const int w = 1 + static_cast<int>(rng.next_below(6));
    const int count = h * w;
    const int n = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(2 * count)));
    BandStack chip = make_chip("p", "2020-06-01", h, w, {"B", "G"}, static_cast<float>(rep));
    PixelSet set = sample_pixel_set(chip, n, rng.next_u64());

    std::set<std::vector<float>> source;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) source.insert(pixel_vector(chip, r, c));
    std::set<std::vector<float>> rows;
    for (Index i = 0; i < n; ++i) {
      auto row = row_vector(set.values, i);
      REQUIRE(source.count(row) == 1);
      rows.insert(row);
    }
    if (count >= n) REQUIRE(static_cast<int>(rows.size()) == n);  // no repetition
  }
}

namespace {

// `ordinal` records with 16-day spacing whose pixel values encode the record's
// date rank, so assembled sequences reveal which source record fed each step.
std::vector<BandStack> ordered_records(int count, int h, int w) {
  std::vector<BandStack> records;
  for (int i = 0; i < count; ++i) {
    BandStack s = make_chip("p9", iso_after(2020, 4, 1, 16 * i), h, w, {"B", "G"}, 0.0f);
    std::fill(s.data.begin(), s.data.end(), static_cast<float>(i));
    records.push_back(std::move(s));
  }
  return records;
}

}  // namespace

TEST_CASE("sequences sort, pad, and mask by date") {
  SECTION("full-length series needs no padding") {
    auto records = ordered_records(41, 3, 3);
    SequenceSample sample = assemble_sequence(records, 41, 9, 4);
    REQUIRE(sample.valid_len == 41);
    REQUIRE(sample.values.shape() == std::vector<Index>{41, 9, 2});
    for (Index t = 0; t < 41; ++t) {
      REQUIRE(sample.mask[t] == 1.0f);
      REQUIRE(sample.positions[static_cast<std::size_t>(t)] == static_cast<int>(t));
      REQUIRE(sample.values(t, 0, 0) == static_cast<float>(t));
    }
    REQUIRE(sample.label == "paddy");
    REQUIRE(sample.parcel_id == "p9");
  }
  SECTION("short series pads with zeros behind the mask") {
    auto records = ordered_records(30, 3, 3);
    // Offset values by one so step zero is distinguishable from padding.
    for (auto& r : records)
      for (auto& v : r.data) v += 1.0f;
    SequenceSample sample = assemble_sequence(records, 41, 9, 4);
    REQUIRE(sample.valid_len == 30);
    for (Index t = 0; t < 30; ++t) {
      REQUIRE(sample.mask[t] == 1.0f);
      REQUIRE(sample.values(t, 0, 0) == static_cast<float>(t + 1));
      REQUIRE(sample.positions[static_cast<std::size_t>(t)] == static_cast<int>(t));
    }
    for (Index t = 30; t < 41; ++t) {
      REQUIRE(sample.mask[t] == 0.0f);
      for (Index i = 0; i < 9; ++i)
        for (Index b = 0; b < 2; ++b) REQUIRE(sample.values(t, i, b) == 0.0f);
    }
  }
}

TEST_CASE("over-length sequences subsample uniformly") {
  auto records = ordered_records(50, 2, 2);
  SequenceSample sample = assemble_sequence(records, 41, 4, 4);
  REQUIRE(sample.valid_len == 41);
  // Kept source indices are floor(i*50/41): 0, 1, 2, ... with nine skips.
  int prev = -1;
  for (Index t = 0; t < 41; ++t) {
    const int expected = static_cast<int>(t * 50 / 41);
    REQUIRE(sample.values(t, 0, 0) == static_cast<float>(expected));
    REQUIRE(expected > prev);
    prev = expected;
    REQUIRE(sample.mask[t] == 1.0f);
  }
  // Hand-checked spots: floor(1*50/41)=1, floor(8*50/41)=9, floor(40*50/41)=48.
  REQUIRE(sample.values(1, 0, 0) == 1.0f);
  REQUIRE(sample.values(8, 0, 0) == 9.0f);
  REQUIRE(sample.values(40, 0, 0) == 48.0f);
}

TEST_CASE("sequence assembly ignores input order") {
  auto records = ordered_records(23, 3, 3);
  SequenceSample base = assemble_sequence(records, 41, 9, 11);
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    auto shuffled = records;
    rng.shuffle(shuffled);
    SequenceSample sample = assemble_sequence(shuffled, 41, 9, 11);
    REQUIRE(same_floats(sample.values, base.values));
    REQUIRE(same_floats(sample.mask, base.mask));
    REQUIRE(sample.positions == base.positions);
  }
}

TEST_CASE("sequence assembly validates its inputs") {
  auto records = ordered_records(5, 2, 2);
  REQUIRE_THROWS_AS(assemble_sequence({}, 41, 4, 1), ContractError);
  REQUIRE_THROWS_AS(assemble_sequence(records, 0, 4, 1), ContractError);
  REQUIRE_THROWS_AS(assemble_sequence(records, 41, 0, 1), ContractError);

  auto mixed_parcel = records;
  mixed_parcel[2].parcel_id = "other";
  REQUIRE_THROWS_AS(assemble_sequence(mixed_parcel, 41, 4, 1), ContractError);
  auto mixed_season = records;
  mixed_season[2].season_id = "s2021";
  REQUIRE_THROWS_AS(assemble_sequence(mixed_season, 41, 4, 1), ContractError);
  auto mixed_sat = records;
  mixed_sat[2].satellite = "L8";
  REQUIRE_THROWS_AS(assemble_sequence(mixed_sat, 41, 4, 1), ContractError);
  auto mixed_bands = records;
  mixed_bands[2].bands = {"G", "B"};
  REQUIRE_THROWS_AS(assemble_sequence(mixed_bands, 41, 4, 1), DimensionError);
  auto mixed_label = records;
  mixed_label[2].label = "other";
  REQUIRE_THROWS_AS(assemble_sequence(mixed_label, 41, 4, 1), ContractError);
}

TEST_CASE("batches stack consistent samples") {
  auto make_sample = [](int ordinal) {
    auto records = ordered_records(6, 2, 2);
    for (auto& r : records) r.parcel_id = "p" + std::to_string(ordinal);
    SequenceSample s = assemble_sequence(records, 8, 4, static_cast<std::uint64_t>(ordinal));
    s.label_index = ordinal % 3;
    return s;
  };
  std::vector<SequenceSample> samples = {make_sample(0), make_sample(1), make_sample(2)};
  SampleBatch batch = batch_sequences(samples);
  REQUIRE(batch.values.shape() == std::vector<Index>{3, 8, 4, 2});
  REQUIRE(batch.mask.shape() == std::vector<Index>{3, 8});
  REQUIRE(batch.positions.shape() == std::vector<Index>{3, 8});
  REQUIRE(batch.labels == std::vector<Index>{0, 1, 2});
  for (Index s = 0; s < 3; ++s) {
    for (Index t = 0; t < 8; ++t) {
      REQUIRE(batch.mask(s, t) == (t < 6 ? 1.0f : 0.0f));
      REQUIRE(batch.positions(s, t) == (t < 6 ? static_cast<float>(t) : 0.0f));
      REQUIRE(batch.values(s, t, 0, 0) == samples[static_cast<std::size_t>(s)].values(t, 0, 0));
    }
  }

  SECTION("a sample without a label index is rejected") {
    samples[1].label_index = -1;
    REQUIRE_THROWS_AS(batch_sequences(samples), ContractError);
  }
  SECTION("shape disagreement is rejected") {
    samples[1].values = Tensor<float>::zeros({8, 4, 3});
    REQUIRE_THROWS_AS(batch_sequences(samples), DimensionError);
  }
  SECTION("empty batches are rejected") {
    REQUIRE_THROWS_AS(batch_sequences({}), ContractError);
  }
}

TEST_CASE("chip batches stack whole images") {
  std::vector<BandStack> chips = {
      make_chip("a", "2020-05-01", 3, 3, {"B", "G", "R"}, 0.0f),
      make_chip("b", "2020-05-01", 3, 3, {"B", "G", "R"}, 50.0f),
  };
  SampleBatch batch = batch_chips(chips, {2, 0});
  REQUIRE(batch.values.shape() == std::vector<Index>{2, 3, 3, 3});
  REQUIRE(batch.labels == std::vector<Index>{2, 0});
  REQUIRE(batch.values(0, 1, 2, 1) == chips[0].at(1, 2, 1));
  REQUIRE(batch.values(1, 2, 0, 2) == chips[1].at(2, 0, 2));

  REQUIRE_THROWS_AS(batch_chips(chips, {1}), ContractError);
  REQUIRE_THROWS_AS(batch_chips({}, {}), ContractError);
  chips[1].height = 2;
  chips[1].data.resize(3u * 2u * 3u);
  REQUIRE_THROWS_AS(batch_chips(chips, {2, 0}), DimensionError);
}
