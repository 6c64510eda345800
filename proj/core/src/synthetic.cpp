#include "adnet/synthetic.hpp"

#include <cmath>
#include <random>

#include "adnet/rng.hpp"

namespace adnet {

void SyntheticSpec::validate() const {
  if (volumes < 1) throw ConfigError("synthetic: volumes must be >= 1");
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
    throw ConfigError("synthetic: dims must be >= 1");
  if (spacing[0] <= 0 || spacing[1] <= 0 || spacing[2] <= 0)
    throw ConfigError("synthetic: spacing must be > 0");
  if (classes.empty()) throw ConfigError("synthetic: at least one class required");
  if (contrast <= 0) throw ConfigError("synthetic: contrast must be > 0");
  if (noise_sigma < 0) throw ConfigError("synthetic: noise sigma must be >= 0");
}

bool shape_contains(const ShapePlacement& s, int z, int y, int x) {
  const double dz = (z - s.center[0]) / s.radii[0];
  const double dy = (y - s.center[1]) / s.radii[1];
  const double dx = (x - s.center[2]) / s.radii[2];
  switch (s.family) {
    case ShapeFamily::kEllipsoid:
      return dz * dz + dy * dy + dx * dx <= 1.0;
    case ShapeFamily::kBox:
      return std::abs(dz) <= 1.0 && std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
    case ShapeFamily::kTube:
      return std::abs(dz) <= 1.0 && dy * dy + dx * dx <= 1.0;
  }
  return false;
}

void paint_shape(Volume& v, LabelVolume& labels, const ShapePlacement& s,
                 float intensity, uint32_t label) {
  const int z0 = std::max(0, int(std::floor(s.center[0] - s.radii[0])));
  const int z1 = std::min(v.dims[0] - 1, int(std::ceil(s.center[0] + s.radii[0])));
  const int y0 = std::max(0, int(std::floor(s.center[1] - s.radii[1])));
  const int y1 = std::min(v.dims[1] - 1, int(std::ceil(s.center[1] + s.radii[1])));
  const int x0 = std::max(0, int(std::floor(s.center[2] - s.radii[2])));
  const int x1 = std::min(v.dims[2] - 1, int(std::ceil(s.center[2] + s.radii[2])));
  for (int z = z0; z <= z1; ++z)
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (shape_contains(s, z, y, x)) {
          v.at(z, y, x) = intensity;
          labels.at(z, y, x) = label;
        }
}

namespace {

// Samples a placement for class c (0-based) inside its horizontal band.
// Throws DataError when the band cannot host the shape.
ShapePlacement sample_placement(const SyntheticSpec& spec, int c,
                                std::mt19937_64& rng) {
  const int D = spec.dims[0], H = spec.dims[1], W = spec.dims[2];
  const int n_classes = int(spec.classes.size());
  const double band_w = double(W) / n_classes;

  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  ShapePlacement s;
  s.family = spec.classes[size_t(c)];
  s.radii[0] = std::max(1.0, 0.28 * D * jitter(rng));
  s.radii[1] = std::max(1.0, 0.36 * H * jitter(rng));
  s.radii[2] = std::max(1.0, 0.33 * band_w * jitter(rng));

  // Valid center interval per axis keeps the shape strictly inside the
  // volume (and inside the class band along x).
  const double margin = 1.0;
  const double z_lo = s.radii[0] + margin, z_hi = D - 1 - s.radii[0] - margin;
  const double y_lo = s.radii[1] + margin, y_hi = H - 1 - s.radii[1] - margin;
  const double x_lo = c * band_w + s.radii[2] + margin;
  const double x_hi = (c + 1) * band_w - 1 - s.radii[2] - margin;
  if (z_lo > z_hi || y_lo > y_hi || x_lo > x_hi)
    throw DataError("synthetic shape does not fit inside volume dims");

  std::uniform_real_distribution<double> uz(z_lo, z_hi), uy(y_lo, y_hi),
      ux(x_lo, x_hi);
  s.center = {uz(rng), uy(rng), ux(rng)};
  return s;
}

}  // namespace

std::vector<std::pair<Volume, LabelVolume>> generate_synthetic_dataset(
    const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::pair<Volume, LabelVolume>> out;
  out.reserve(size_t(spec.volumes));

  for (int i = 0; i < spec.volumes; ++i) {
    auto rng = make_rng(mix_seed(spec.seed, 0x5d0ULL, uint64_t(i)));
    Volume v;
    v.dims = spec.dims;
    v.spacing = spec.spacing;
    v.data.assign(size_t(v.num_voxels()), 0.0f);
    LabelVolume lv;
    lv.dims = spec.dims;
    lv.labels.assign(size_t(v.num_voxels()), 0);

    for (int c = 0; c < int(spec.classes.size()); ++c) {
      ShapePlacement s = sample_placement(spec, c, rng);
      paint_shape(v, lv, s, float((c + 1) * spec.contrast), uint32_t(c + 1));
    }

    if (spec.noise_sigma > 0) {
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (float& x : v.data) x += float(noise(rng));
    }
    out.emplace_back(std::move(v), std::move(lv));
  }
  return out;
}

}  // namespace adnet
