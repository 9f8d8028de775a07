#include "cropsits/models/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cropsits/error.hpp"

namespace cropsits::models {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'W', '1'};

void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

// Cursor over a byte buffer that throws TruncationError instead of reading
// past the end.
struct Reader {
  const unsigned char* p;
  std::size_t left;
  std::string origin;

  void need(std::size_t n) const {
    if (left < n)
      throw TruncationError(origin + ": needs " + std::to_string(n) + " more bytes, has " +
                            std::to_string(left));
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(p[0]) |
                            (static_cast<std::uint32_t>(p[1]) << 8) |
                            (static_cast<std::uint32_t>(p[2]) << 16) |
                            (static_cast<std::uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    left -= n;
    return s;
  }
};

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const CheckpointMeta& meta) {
  if (params.tensors.empty()) throw ContractError("save_checkpoint: empty parameter set");

  std::string bytes;
  bytes.append(kMagic, 4);
  put_u32le(bytes, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, tensor] : params.tensors) {  // map order == sorted name order
    put_u32le(bytes, static_cast<std::uint32_t>(name.size()));
    bytes += name;
    put_u32le(bytes, static_cast<std::uint32_t>(tensor.rank()));
    for (Index d : tensor.shape()) put_u32le(bytes, static_cast<std::uint32_t>(d));
    for (float v : tensor.data()) put_u32le(bytes, std::bit_cast<std::uint32_t>(v));
  }

  nlohmann::json side;
  side["model"] = meta.model;
  try {
    side["config"] = nlohmann::json::parse(meta.config_json);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError("save_checkpoint: config_json is not valid JSON: " + std::string(e.what()));
  }
  side["seed"] = meta.seed;
  side["epoch"] = meta.epoch;
  side["metrics"] = meta.metrics;

  write_atomic(path, bytes);
  write_atomic(sidecar_path(path), side.dump(2) + "\n");
}

ParameterSet<float> load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());

  Reader r{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), path.string()};
  if (r.str(4) != std::string(kMagic, 4))
    throw FormatError(path.string() + ": not a checkpoint file (bad magic)");

  ParameterSet<float> params;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<Index>(r.u32());
      if (shape[d] <= 0) throw FormatError(path.string() + ": nonpositive dim in '" + name + "'");
      total *= static_cast<std::size_t>(shape[d]);
    }
    r.need(total * 4);
    std::vector<float> values(total);
    for (std::size_t k = 0; k < total; ++k) values[k] = std::bit_cast<float>(r.u32());
    for (float v : values)
      if (!std::isfinite(v))
        throw SchemaError(path.string() + ": non-finite weight in '" + name + "'");
    params.add(name, Tensor<float>(shape, std::move(values)));
  }
  if (r.left != 0)
    throw FormatError(path.string() + ": " + std::to_string(r.left) + " trailing bytes");

  if (meta) {
    const std::filesystem::path side = sidecar_path(path);
    std::ifstream sin(side);
    if (!sin) throw IoError("cannot open " + side.string());
    std::string text((std::istreambuf_iterator<char>(sin)), std::istreambuf_iterator<char>());
    if (sin.bad()) throw IoError("read failure on " + side.string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(side.string() + ": " + e.what());
    }
    try {
      meta->model = j.value("model", std::string{});
      meta->config_json = j.at("config").dump();
      meta->seed = j.value("seed", std::uint64_t{0});
      meta->epoch = j.value("epoch", 0);
      meta->metrics = j.value("metrics", std::map<std::string, double>{});
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(side.string() + ": " + e.what());
    }
  }
  return params;
}

}  // namespace cropsits::models
