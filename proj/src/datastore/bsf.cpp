#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "cropsits/datastore/bandstack.hpp"
#include "cropsits/datastore/date.hpp"
#include "cropsits/error.hpp"

namespace cropsits::data {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'F', '1'};

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// Bands must be a subsequence of the sensor's canonical order.
bool is_canonical_subsequence(const std::vector<std::string>& bands,
                              const std::vector<std::string>& canonical) {
  std::size_t pos = 0;
  for (const std::string& b : bands) {
    while (pos < canonical.size() && canonical[pos] != b) ++pos;
    if (pos == canonical.size()) return false;
    ++pos;
  }
  return true;
}

}  // namespace

void BandStack::validate() const {
  const SensorSpec& sensor = sensor_by_name(satellite);
  if (parcel_id.empty()) throw ContractError("band stack: empty parcel_id");
  if (!try_parse_date(date))
    throw ContractError("band stack " + parcel_id + ": bad date '" + date + "'");
  if (height <= 0 || width <= 0)
    throw ContractError("band stack " + parcel_id + ": nonpositive dimensions");
  if (bands.empty()) throw ContractError("band stack " + parcel_id + ": no bands");
  if (!is_canonical_subsequence(bands, sensor.bands))
    throw ContractError("band stack " + parcel_id + ": bands are not a subsequence of the " +
                        satellite + " canonical order");
  const std::size_t want =
      static_cast<std::size_t>(bands.size()) * static_cast<std::size_t>(height) *
      static_cast<std::size_t>(width);
  if (data.size() != want)
    throw ContractError("band stack " + parcel_id + ": " + std::to_string(data.size()) +
                        " values for " + std::to_string(bands.size()) + "x" +
                        std::to_string(height) + "x" + std::to_string(width));
  for (float v : data)
    if (!std::isfinite(v))
      throw ContractError("band stack " + parcel_id + ": non-finite reflectance value");
}

bool operator==(const BandStack& a, const BandStack& b) {
  if (a.parcel_id != b.parcel_id || a.satellite != b.satellite || a.date != b.date ||
      a.season_id != b.season_id || a.height != b.height || a.width != b.width ||
      a.bands != b.bands || a.label != b.label || a.data.size() != b.data.size())
    return false;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    if (std::bit_cast<std::uint32_t>(a.data[i]) != std::bit_cast<std::uint32_t>(b.data[i]))
      return false;
  return true;
}

std::string encode_bandstack(const BandStack& stack) {
  stack.validate();
  nlohmann::json header = {
      {"parcel_id", stack.parcel_id}, {"satellite", stack.satellite},
      {"date", stack.date},           {"season_id", stack.season_id},
      {"height", stack.height},       {"width", stack.width},
      {"bands", stack.bands},
  };
  if (stack.label) header["label"] = *stack.label;
  const std::string head = header.dump();

  std::string out;
  out.reserve(8 + head.size() + stack.data.size() * 4);
  out.append(kMagic, 4);
  put_u32le(out, static_cast<std::uint32_t>(head.size()));
  out += head;
  for (float v : stack.data) put_u32le(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

BandStack decode_bandstack(std::string_view bytes, const std::string& origin) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError(origin + ": not a band-stack file (bad magic)");
  const std::uint32_t head_len = get_u32le(p + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(head_len))
    throw TruncationError(origin + ": header needs " + std::to_string(head_len) +
                          " bytes, file has " + std::to_string(bytes.size() - 8) +
                          " after the preamble");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": unparseable header: " + e.what());
  }

  BandStack stack;
  try {
    stack.parcel_id = header.at("parcel_id").get<std::string>();
    stack.satellite = header.at("satellite").get<std::string>();
    stack.date = header.at("date").get<std::string>();
    stack.season_id = header.at("season_id").get<std::string>();
    stack.height = header.at("height").get<int>();
    stack.width = header.at("width").get<int>();
    stack.bands = header.at("bands").get<std::vector<std::string>>();
    if (header.contains("label")) stack.label = header.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(origin + ": header field: " + e.what());
  }

  const SensorSpec* sensor = nullptr;
  try {
    sensor = &sensor_by_name(stack.satellite);
  } catch (const UsageError&) {
    throw SchemaError(origin + ": unknown satellite '" + stack.satellite + "'");
  }
  for (const std::string& b : stack.bands)
    if (!sensor->has_band(b))
      throw SchemaError(origin + ": unknown band token '" + b + "' for " + stack.satellite);
  if (!is_canonical_subsequence(stack.bands, sensor->bands))
    throw SchemaError(origin + ": bands are not a subsequence of the " + stack.satellite +
                      " canonical order");
  if (stack.height <= 0 || stack.width <= 0)
    throw SchemaError(origin + ": nonpositive dimensions");

  const std::size_t want = static_cast<std::size_t>(stack.bands.size()) *
                           static_cast<std::size_t>(stack.height) *
                           static_cast<std::size_t>(stack.width) * 4;
  const std::size_t have = bytes.size() - 8 - head_len;
  if (have != want)
    throw TruncationError(origin + ": payload is " + std::to_string(have) + " bytes, expected " +
                          std::to_string(want));

  stack.data.resize(want / 4);
  const unsigned char* q = p + 8 + head_len;
  for (std::size_t i = 0; i < stack.data.size(); ++i, q += 4)
    stack.data[i] = std::bit_cast<float>(get_u32le(q));
  for (float v : stack.data)
    if (!std::isfinite(v)) throw SchemaError(origin + ": non-finite reflectance value");
  return stack;
}

void write_bandstack(const BandStack& stack, const std::filesystem::path& path) {
  const std::string bytes = encode_bandstack(stack);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

BandStack read_bandstack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return decode_bandstack(bytes, path.string());
}

}  // namespace cropsits::data
