#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "adnet/volume.hpp"

namespace adnet {

enum class ShapeFamily { kEllipsoid, kBox, kTube };

// Axis-aligned shape instance in voxel coordinates.
// radii are half-extents per axis (z, y, x); for kTube the z radius is the
// half-length of the cylinder.
struct ShapePlacement {
  ShapeFamily family = ShapeFamily::kEllipsoid;
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> radii{1, 1, 1};
};

struct SyntheticSpec {
  int volumes = 20;
  std::array<int, 3> dims{16, 64, 64};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::vector<ShapeFamily> classes{ShapeFamily::kEllipsoid, ShapeFamily::kBox};
  double contrast = 1.0;
  double noise_sigma = 0.05;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

bool shape_contains(const ShapePlacement& s, int z, int y, int x);

// Sets intensity and label on every voxel inside the shape. The shape must
// lie fully inside the volume (caller guarantees placement).
void paint_shape(Volume& v, LabelVolume& labels, const ShapePlacement& s,
                 float intensity, uint32_t label);

// Deterministic per seed. Background intensity 0; class c (1-based) is one
// connected shape of intensity c * contrast, confined to its own horizontal
// band so classes never overlap. Gaussian noise is added last.
// Throws DataError if a sampled shape cannot fit inside dims.
std::vector<std::pair<Volume, LabelVolume>> generate_synthetic_dataset(
    const SyntheticSpec& spec);

}  // namespace adnet
