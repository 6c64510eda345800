#include "adnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "adnet/errors.hpp"
#include "json.hpp"

namespace adnet {

namespace {
using nlohmann::json;
constexpr char kMagic[8] = {'A', 'D', 'N', 'T', 'C', 'K', 'P', '1'};
}  // namespace

void save_checkpoint(const CheckpointData& ckpt, const std::string& path) {
  json manifest;
  manifest["meta"] = ckpt.meta;
  manifest["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != int64_t(t.data.size()))
      throw DataError("checkpoint tensor '" + t.name + "': shape/data mismatch");
    json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    entry["offset"] = offset;
    entry["count"] = uint64_t(t.data.size());
    manifest["tensors"].push_back(entry);
    offset += uint64_t(t.data.size()) * sizeof(float);
  }
  const std::string header = manifest.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint64_t hlen = header.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(header.data(), std::streamsize(header.size()));
  for (const auto& t : ckpt.tensors)
    f.write(reinterpret_cast<const char*>(t.data.data()),
            std::streamsize(t.data.size() * sizeof(float)));
  if (!f) throw IoError("write failed: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen == 0 || hlen > (64ull << 20))
    throw IoError("corrupt checkpoint header: " + path);
  std::string header(size_t(hlen), '\0');
  f.read(header.data(), std::streamsize(hlen));
  if (!f) throw IoError("truncated checkpoint: " + path);

  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const json::exception& e) {
    throw IoError("bad checkpoint manifest in " + path + ": " + e.what());
  }

  CheckpointData ckpt;
  if (manifest.contains("meta"))
    ckpt.meta = manifest["meta"].get<std::map<std::string, double>>();
  for (const auto& entry : manifest.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<Shape>();
    const uint64_t count = entry.at("count").get<uint64_t>();
    if (shape_numel(t.shape) != int64_t(count))
      throw IoError("checkpoint tensor '" + t.name + "': bad count in " + path);
    t.data.resize(size_t(count));
    ckpt.tensors.push_back(std::move(t));
  }
  // Payloads follow the manifest in declaration order.
  for (auto& t : ckpt.tensors) {
    f.read(reinterpret_cast<char*>(t.data.data()),
           std::streamsize(t.data.size() * sizeof(float)));
    if (!f) throw IoError("truncated checkpoint payload: " + path);
  }
  return ckpt;
}

}  // namespace adnet
