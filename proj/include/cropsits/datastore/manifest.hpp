#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cropsits::data {

// One dataset row: where a band stack lives and what it shows.
struct ManifestRecord {
  std::string path;
  std::string parcel_id;
  std::string satellite;
  std::string date;  // ISO 8601
  std::string season_id;
  std::string label;
  int height = 0;
  int width = 0;
};

bool operator==(const ManifestRecord& a, const ManifestRecord& b);

// (parcel_id, satellite, date) must be unique; violations are schema errors.
void validate_manifest(const std::vector<ManifestRecord>& records);

// JSON Lines, one record per line. Reading validates; writing stages to a
// temporary and renames.
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path);

// Conjunctive record filter; absent fields match everything. The window is
// inclusive on both ends.
struct ManifestFilter {
  std::optional<std::string> satellite;
  std::optional<std::unordered_set<std::string>> parcels;
  std::optional<std::pair<std::string, std::string>> date_window;
  std::optional<std::string> season;
};

// Preserves input order. A window with start > end is a contract error.
std::vector<ManifestRecord> filter_manifest(const std::vector<ManifestRecord>& records,
                                            const ManifestFilter& filter);

}  // namespace cropsits::data
