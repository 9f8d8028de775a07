#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <unordered_set>

#include "cropsits/datastore/date.hpp"
#include "cropsits/datastore/manifest.hpp"
#include "cropsits/datastore/sensor.hpp"
#include "cropsits/error.hpp"

namespace cropsits::data {

bool operator==(const ManifestRecord& a, const ManifestRecord& b) {
  return a.path == b.path && a.parcel_id == b.parcel_id && a.satellite == b.satellite &&
         a.date == b.date && a.season_id == b.season_id && a.label == b.label &&
         a.height == b.height && a.width == b.width;
}

void validate_manifest(const std::vector<ManifestRecord>& records) {
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  for (const ManifestRecord& r : records) {
    if (r.path.empty()) throw SchemaError("manifest record with empty path");
    if (!try_parse_date(r.date))
      throw SchemaError("manifest record " + r.path + ": bad date '" + r.date + "'");
    sensor_by_name(r.satellite);  // throws on unknown names
    if (r.height <= 0 || r.width <= 0)
      throw SchemaError("manifest record " + r.path + ": nonpositive dimensions");
    std::string key = r.parcel_id + '\x1f' + r.satellite + '\x1f' + r.date;
    if (!seen.insert(std::move(key)).second)
      throw SchemaError("duplicate manifest record for parcel " + r.parcel_id + ", " +
                        r.satellite + ", " + r.date);
  }
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ManifestRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestRecord r;
    try {
      r.path = j.at("path").get<std::string>();
      r.parcel_id = j.at("parcel_id").get<std::string>();
      r.satellite = j.at("satellite").get<std::string>();
      r.date = j.at("date").get<std::string>();
      r.season_id = j.at("season_id").get<std::string>();
      r.label = j.at("label").get<std::string>();
      r.height = j.at("height").get<int>();
      r.width = j.at("width").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    records.push_back(std::move(r));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  try {
    validate_manifest(records);
  } catch (const UsageError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return records;
}

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path) {
  validate_manifest(records);
  std::ostringstream out;
  for (const ManifestRecord& r : records) {
    nlohmann::json j = {{"path", r.path},           {"parcel_id", r.parcel_id},
                        {"satellite", r.satellite}, {"date", r.date},
                        {"season_id", r.season_id}, {"label", r.label},
                        {"height", r.height},       {"width", r.width}};
    out << j.dump() << '\n';
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    const std::string text = out.str();
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::vector<ManifestRecord> filter_manifest(const std::vector<ManifestRecord>& records,
                                            const ManifestFilter& filter) {
  if (filter.date_window && filter.date_window->first > filter.date_window->second)
    throw ContractError("date window starts after it ends: " + filter.date_window->first +
                        " > " + filter.date_window->second);
  std::vector<ManifestRecord> out;
  for (const ManifestRecord& r : records) {
    if (filter.satellite && r.satellite != *filter.satellite) continue;
    if (filter.parcels && !filter.parcels->count(r.parcel_id)) continue;
    if (filter.date_window &&
        (r.date < filter.date_window->first || r.date > filter.date_window->second))
      continue;
    if (filter.season && r.season_id != *filter.season) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace cropsits::data
