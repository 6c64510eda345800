#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adnet/errors.hpp"

namespace adnet {

// 3D scalar image, C-order data (z outermost), one value per voxel.
// dims = (D, H, W), spacing = (sz, sy, sx) in millimeters per voxel.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<float> data;

  int64_t num_voxels() const {
    return int64_t(dims[0]) * dims[1] * dims[2];
  }
  int64_t index(int z, int y, int x) const {
    return (int64_t(z) * dims[1] + y) * dims[2] + x;
  }
  float at(int z, int y, int x) const { return data[index(z, y, x)]; }
  float& at(int z, int y, int x) { return data[index(z, y, x)]; }

  // Throws DataError unless dims >= 1, spacing > 0, data length matches
  // and every value is finite.
  void validate() const;
};

// Integer-labeled partition paired with a Volume. Label 0 is reserved for
// background in class masks; supervoxel output uses a dense range 1..L.
struct LabelVolume {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<uint32_t> labels;

  int64_t num_voxels() const {
    return int64_t(dims[0]) * dims[1] * dims[2];
  }
  int64_t index(int z, int y, int x) const {
    return (int64_t(z) * dims[1] + y) * dims[2] + x;
  }
  uint32_t at(int z, int y, int x) const { return labels[index(z, y, x)]; }
  uint32_t& at(int z, int y, int x) { return labels[index(z, y, x)]; }

  void validate() const;
};

// One axial slice, optionally carrying a binary mask.
struct Slice2D {
  std::string volume_id;
  int z = 0;
  int height = 0;
  int width = 0;
  std::vector<float> image;
  std::optional<std::vector<uint8_t>> mask;
};

// ---------------------------------------------------------------------------
// File I/O.
//
// A volume <name> is stored as two files: <name>.rvf.json holding
// {"dims":[D,H,W],"spacing":[sz,sy,sx],"dtype":"f32le"} and <name>.rvf.raw
// holding the payload in little-endian C-order (z, y, x). Label volumes use
// dtype "u32le". All functions take the bare <name> path without extension.
// ---------------------------------------------------------------------------

void save_volume(const Volume& v, const std::string& base_path);
Volume load_volume(const std::string& base_path);
void save_labels(const LabelVolume& lv, const std::string& base_path);
LabelVolume load_labels(const std::string& base_path);

// ---------------------------------------------------------------------------
// Preprocessing.
// ---------------------------------------------------------------------------

// Clamps values above the (1 - pct) empirical quantile to that quantile.
// The quantile is the ascending order statistic at index ceil((1-pct)*N) - 1.
// pct = 0 returns the volume unchanged. Requires 0 <= pct < 1.
Volume clip_top_percentile(const Volume& v, double pct);

// Center-crops or zero-pads every slice to (target_h, target_w). When the
// difference is odd the extra row/column is removed from or added to the
// high-index side.
Volume crop_or_pad(const Volume& v, int target_h, int target_w);

// ---------------------------------------------------------------------------
// Slice access.
// ---------------------------------------------------------------------------

std::vector<float> extract_slice(const Volume& v, int z);

// Binary mask of one class on one slice (1 where labels == cls).
std::vector<uint8_t> class_mask_slice(const LabelVolume& lv, int z, uint32_t cls);

// Binary mask of one class over the whole volume.
std::vector<uint8_t> class_mask_volume(const LabelVolume& lv, uint32_t cls);

}  // namespace adnet
