#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "adnet/head.hpp"
#include "adnet/volume.hpp"

namespace adnet {

enum class TransformTarget { kSupport, kQuery };

struct SamplerConfig {
  int min_pixels = 200;    // per-slice foreground floor
  int max_attempts = 50;
  TransformTarget target = TransformTarget::kQuery;
  uint64_t seed = 0;

  void validate() const {
    if (min_pixels < 1) throw ConfigError("sampler: min_pixels must be >= 1");
    if (max_attempts < 1) throw ConfigError("sampler: max_attempts must be >= 1");
  }
};

// Augmentation ranges; rotation/shear in degrees, translation as a fraction
// of the slice extent.
struct TransformSpec {
  double rotation_deg = 25.0;
  double scale_lo = 0.8, scale_hi = 1.2;
  double translate_frac = 0.1;
  double shear_deg = 5.0;
  double gamma_lo = 0.7, gamma_hi = 1.5;

  void validate() const {
    if (rotation_deg < 0 || shear_deg < 0 || translate_frac < 0)
      throw ConfigError("transforms: ranges must be >= 0");
    if (scale_lo > scale_hi || scale_lo <= 0)
      throw ConfigError("transforms: bad scale range");
    if (gamma_lo > gamma_hi || gamma_lo <= 0)
      throw ConfigError("transforms: bad gamma range");
  }
};

// One concrete sample from a TransformSpec.
struct TransformParams {
  double rotation_rad = 0.0;
  double scale = 1.0;
  double shear_rad = 0.0;
  double shift_y = 0.0;
  double shift_x = 0.0;
  double gamma = 1.0;

  static TransformParams identity() { return {}; }
  bool is_identity() const {
    return rotation_rad == 0.0 && scale == 1.0 && shear_rad == 0.0 &&
           shift_y == 0.0 && shift_x == 0.0 && gamma == 1.0;
  }
};

TransformParams sample_transform_params(const TransformSpec& spec, int height,
                                        int width, std::mt19937_64& rng);

// Affine warp about the slice center (rotation ∘ shear ∘ scale, then
// translation): bilinear for the image, nearest-neighbor for the mask, zero
// fill outside. Then gamma on the image: normalize to [0,1] over the slice,
// raise to gamma, restore the range (constant slices are left unchanged).
void apply_transform_params(std::vector<float>& image,
                            std::vector<uint8_t>& mask, int height, int width,
                            const TransformParams& params);

// Samples parameters and applies them; returns the parameters used.
TransformParams apply_random_transform(std::vector<float>& image,
                                       std::vector<uint8_t>& mask, int height,
                                       int width, const TransformSpec& spec,
                                       std::mt19937_64& rng);

// Supervoxel-as-class episode construction: pick a supervoxel uniformly,
// pick two distinct slices where it has >= min_pixels pixels, transform the
// configured side. Failed picks (including transforms that leave too little
// foreground) consume attempts; exhausting max_attempts raises DataError.
Episode sample_episode(const Volume& volume, const LabelVolume& supervoxels,
                       const std::string& volume_id, const SamplerConfig& cfg,
                       const TransformSpec& transforms, std::mt19937_64& rng);

}  // namespace adnet
