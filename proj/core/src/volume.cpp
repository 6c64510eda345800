#include "adnet/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw payloads are little-endian; big-endian hosts unsupported");

namespace adnet {

namespace {

using nlohmann::json;

void write_raw(const std::string& path, const void* bytes, size_t n) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(static_cast<const char*>(bytes), std::streamsize(n));
  if (!f) throw IoError("write failed: " + path);
}

std::vector<char> read_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open: " + path);
  auto size = f.tellg();
  f.seekg(0);
  std::vector<char> buf(static_cast<size_t>(size));
  f.read(buf.data(), size);
  if (!f) throw IoError("read failed: " + path);
  return buf;
}

json read_header(const std::string& base_path, const std::string& want_dtype) {
  const std::string meta_path = base_path + ".rvf.json";
  std::ifstream f(meta_path);
  if (!f) throw IoError("cannot open: " + meta_path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("malformed header " + meta_path + ": " + e.what());
  }
  if (!j.contains("dims") || !j.contains("dtype"))
    throw IoError("header missing dims/dtype: " + meta_path);
  if (j["dtype"].get<std::string>() != want_dtype)
    throw IoError("unexpected dtype in " + meta_path + ": expected " + want_dtype);
  return j;
}

void write_header(const std::string& base_path, const std::array<int, 3>& dims,
                  const std::array<double, 3>* spacing, const char* dtype) {
  json j;
  j["dims"] = dims;
  if (spacing) j["spacing"] = *spacing;
  j["dtype"] = dtype;
  std::ofstream f(base_path + ".rvf.json", std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + base_path + ".rvf.json");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + base_path + ".rvf.json");
}

std::array<int, 3> dims_from(const json& j, const std::string& where) {
  auto v = j.at("dims").get<std::vector<int64_t>>();
  if (v.size() != 3 || v[0] < 1 || v[1] < 1 || v[2] < 1)
    throw IoError("invalid dims in " + where);
  return {int(v[0]), int(v[1]), int(v[2])};
}

}  // namespace

void Volume::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw DataError("volume dims must be >= 1");
  if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
    throw DataError("volume spacing must be > 0");
  if (int64_t(data.size()) != num_voxels())
    throw DataError("volume data length does not match dims");
  for (float v : data)
    if (!std::isfinite(v)) throw DataError("volume contains non-finite values");
}

void LabelVolume::validate() const {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw DataError("label volume dims must be >= 1");
  if (int64_t(labels.size()) != num_voxels())
    throw DataError("label data length does not match dims");
}

void save_volume(const Volume& v, const std::string& base_path) {
  write_header(base_path, v.dims, &v.spacing, "f32le");
  write_raw(base_path + ".rvf.raw", v.data.data(), v.data.size() * sizeof(float));
}

Volume load_volume(const std::string& base_path) {
  json j = read_header(base_path, "f32le");
  Volume v;
  v.dims = dims_from(j, base_path);
  if (j.contains("spacing")) {
    auto s = j["spacing"].get<std::vector<double>>();
    if (s.size() != 3 || s[0] <= 0 || s[1] <= 0 || s[2] <= 0)
      throw IoError("invalid spacing in " + base_path);
    v.spacing = {s[0], s[1], s[2]};
  }
  auto buf = read_raw(base_path + ".rvf.raw");
  if (buf.size() != size_t(v.num_voxels()) * sizeof(float))
    throw IoError("payload size mismatch for " + base_path + ": got " +
                  std::to_string(buf.size()) + " bytes, dims need " +
                  std::to_string(v.num_voxels() * sizeof(float)));
  v.data.resize(size_t(v.num_voxels()));
  std::memcpy(v.data.data(), buf.data(), buf.size());
  for (float x : v.data)
    if (!std::isfinite(x))
      throw IoError("non-finite values in " + base_path);
  return v;
}

void save_labels(const LabelVolume& lv, const std::string& base_path) {
  write_header(base_path, lv.dims, nullptr, "u32le");
  write_raw(base_path + ".rvf.raw", lv.labels.data(),
            lv.labels.size() * sizeof(uint32_t));
}

LabelVolume load_labels(const std::string& base_path) {
  json j = read_header(base_path, "u32le");
  LabelVolume lv;
  lv.dims = dims_from(j, base_path);
  auto buf = read_raw(base_path + ".rvf.raw");
  if (buf.size() != size_t(lv.num_voxels()) * sizeof(uint32_t))
    throw IoError("payload size mismatch for " + base_path);
  lv.labels.resize(size_t(lv.num_voxels()));
  std::memcpy(lv.labels.data(), buf.data(), buf.size());
  return lv;
}

Volume clip_top_percentile(const Volume& v, double pct) {
  if (pct < 0.0 || pct >= 1.0)
    throw DataError("clip percentile must be in [0, 1)");
  if (pct == 0.0) return v;
  const int64_t n = int64_t(v.data.size());
  std::vector<float> sorted(v.data);
  int64_t idx = int64_t(std::ceil((1.0 - pct) * double(n))) - 1;
  idx = std::clamp<int64_t>(idx, 0, n - 1);
  std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
  const float q = sorted[size_t(idx)];
  Volume out = v;
  for (float& x : out.data) x = std::min(x, q);
  return out;
}

Volume crop_or_pad(const Volume& v, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1)
    throw DataError("crop_or_pad target must be >= 1");
  const int D = v.dims[0], H = v.dims[1], W = v.dims[2];
  Volume out;
  out.dims = {D, target_h, target_w};
  out.spacing = v.spacing;
  out.data.assign(size_t(out.num_voxels()), 0.0f);

  // Per axis: source start when cropping, destination start when padding.
  // floor(diff/2) at the low side leaves the odd remainder at the high side.
  const int src_y = H > target_h ? (H - target_h) / 2 : 0;
  const int dst_y = H < target_h ? (target_h - H) / 2 : 0;
  const int src_x = W > target_w ? (W - target_w) / 2 : 0;
  const int dst_x = W < target_w ? (target_w - W) / 2 : 0;
  const int copy_h = std::min(H, target_h);
  const int copy_w = std::min(W, target_w);

  for (int z = 0; z < D; ++z)
    for (int y = 0; y < copy_h; ++y) {
      const float* src = &v.data[size_t(v.index(z, src_y + y, src_x))];
      float* dst = &out.data[size_t(out.index(z, dst_y + y, dst_x))];
      std::copy(src, src + copy_w, dst);
    }
  return out;
}

std::vector<float> extract_slice(const Volume& v, int z) {
  if (z < 0 || z >= v.dims[0]) throw DataError("slice index out of range");
  auto begin = v.data.begin() + z * int64_t(v.dims[1]) * v.dims[2];
  return std::vector<float>(begin, begin + int64_t(v.dims[1]) * v.dims[2]);
}

std::vector<uint8_t> class_mask_slice(const LabelVolume& lv, int z, uint32_t cls) {
  if (z < 0 || z >= lv.dims[0]) throw DataError("slice index out of range");
  const int64_t hw = int64_t(lv.dims[1]) * lv.dims[2];
  std::vector<uint8_t> m(static_cast<size_t>(hw));
  const uint32_t* src = lv.labels.data() + z * hw;
  for (int64_t i = 0; i < hw; ++i) m[size_t(i)] = src[i] == cls ? 1 : 0;
  return m;
}

std::vector<uint8_t> class_mask_volume(const LabelVolume& lv, uint32_t cls) {
  std::vector<uint8_t> m(lv.labels.size());
  for (size_t i = 0; i < lv.labels.size(); ++i)
    m[i] = lv.labels[i] == cls ? 1 : 0;
  return m;
}

}  // namespace adnet
