#include "adnet/episodes.hpp"

#include <algorithm>
#include <cmath>

namespace adnet {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TransformParams sample_transform_params(const TransformSpec& spec, int height,
                                        int width, std::mt19937_64& rng) {
  spec.validate();
  TransformParams p;
  std::uniform_real_distribution<double> rot(-spec.rotation_deg, spec.rotation_deg);
  std::uniform_real_distribution<double> scl(spec.scale_lo, spec.scale_hi);
  std::uniform_real_distribution<double> shr(-spec.shear_deg, spec.shear_deg);
  std::uniform_real_distribution<double> ty(-spec.translate_frac * height,
                                            spec.translate_frac * height);
  std::uniform_real_distribution<double> tx(-spec.translate_frac * width,
                                            spec.translate_frac * width);
  std::uniform_real_distribution<double> gam(spec.gamma_lo, spec.gamma_hi);
  p.rotation_rad = rot(rng) * kPi / 180.0;
  p.scale = scl(rng);
  p.shear_rad = shr(rng) * kPi / 180.0;
  p.shift_y = ty(rng);
  p.shift_x = tx(rng);
  p.gamma = gam(rng);
  return p;
}

void apply_transform_params(std::vector<float>& image,
                            std::vector<uint8_t>& mask, int height, int width,
                            const TransformParams& params) {
  const size_t hw = size_t(height) * size_t(width);
  if (image.size() != hw || mask.size() != hw)
    throw DataError("apply_transform: image/mask size mismatch");
  if (params.is_identity()) return;

  const bool warp = params.rotation_rad != 0.0 || params.scale != 1.0 ||
                    params.shear_rad != 0.0 || params.shift_y != 0.0 ||
                    params.shift_x != 0.0;
  if (warp) {
    // Forward map: dst = M (src - c) + c + t with M = R * Shear * scale.
    // Resampling inverts it per destination pixel.
    const double cs = std::cos(params.rotation_rad);
    const double sn = std::sin(params.rotation_rad);
    const double sh = std::tan(params.shear_rad);
    const double s = params.scale;
    // M in (x, y) coordinates: R * [[1, sh], [0, 1]] * s
    const double m00 = s * cs, m01 = s * (cs * sh - sn);
    const double m10 = s * sn, m11 = s * (sn * sh + cs);
    const double det = m00 * m11 - m01 * m10;
    const double i00 = m11 / det, i01 = -m01 / det;
    const double i10 = -m10 / det, i11 = m00 / det;
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;

    std::vector<float> src_img(image);
    std::vector<uint8_t> src_mask(mask);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double rx = x - cx - params.shift_x;
        const double ry = y - cy - params.shift_y;
        const double sx = i00 * rx + i01 * ry + cx;
        const double sy = i10 * rx + i11 * ry + cy;
        const size_t dst = size_t(y) * size_t(width) + size_t(x);

        // image: bilinear with zero outside
        double val = 0.0;
        const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        for (int dy = 0; dy <= 1; ++dy)
          for (int dx = 0; dx <= 1; ++dx) {
            const int xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || xx >= width || yy < 0 || yy >= height) continue;
            const double w = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
            val += w * double(src_img[size_t(yy) * size_t(width) + size_t(xx)]);
          }
        image[dst] = float(val);

        // mask: nearest with zero outside
        const int nx = int(std::lround(sx)), ny = int(std::lround(sy));
        mask[dst] = (nx >= 0 && nx < width && ny >= 0 && ny < height)
                        ? src_mask[size_t(ny) * size_t(width) + size_t(nx)]
                        : 0;
      }
  }

  if (params.gamma != 1.0) {
    float lo = image[0], hi = image[0];
    for (float v : image) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      const double range = double(hi) - double(lo);
      for (float& v : image) {
        const double u = (double(v) - double(lo)) / range;
        v = float(double(lo) + std::pow(u, params.gamma) * range);
      }
    }
  }
}

TransformParams apply_random_transform(std::vector<float>& image,
                                       std::vector<uint8_t>& mask, int height,
                                       int width, const TransformSpec& spec,
                                       std::mt19937_64& rng) {
  TransformParams p = sample_transform_params(spec, height, width, rng);
  apply_transform_params(image, mask, height, width, p);
  return p;
}

Episode sample_episode(const Volume& volume, const LabelVolume& supervoxels,
                       const std::string& volume_id, const SamplerConfig& cfg,
                       const TransformSpec& transforms, std::mt19937_64& rng) {
  cfg.validate();
  transforms.validate();
  if (volume.dims != supervoxels.dims)
    throw DataError("sample_episode: volume/supervoxel dims mismatch");
  const int D = volume.dims[0], H = volume.dims[1], W = volume.dims[2];
  const int64_t hw = int64_t(H) * W;

  uint32_t max_label = 0;
  for (uint32_t l : supervoxels.labels) max_label = std::max(max_label, l);
  if (max_label == 0) throw DataError("sample_episode: no supervoxels");

  // per-label per-slice pixel counts, one pass
  std::vector<int> counts(size_t(max_label + 1) * size_t(D), 0);
  for (int z = 0; z < D; ++z) {
    const uint32_t* row = &supervoxels.labels[size_t(z * hw)];
    for (int64_t i = 0; i < hw; ++i)
      if (row[i] > 0) ++counts[size_t(row[i]) * size_t(D) + size_t(z)];
  }

  std::uniform_int_distribution<uint32_t> pick_label(1, max_label);
  int attempts = 0;
  for (;;) {
    if (attempts >= cfg.max_attempts)
      throw DataError("sample_episode: no qualifying supervoxel after " +
                      std::to_string(cfg.max_attempts) + " attempts");
    ++attempts;

    const uint32_t sv = pick_label(rng);
    std::vector<int> good;
    for (int z = 0; z < D; ++z)
      if (counts[size_t(sv) * size_t(D) + size_t(z)] >= cfg.min_pixels)
        good.push_back(z);
    if (good.size() < 2) continue;

    std::uniform_int_distribution<size_t> pick_a(0, good.size() - 1);
    std::uniform_int_distribution<size_t> pick_b(0, good.size() - 2);
    const size_t ia = pick_a(rng);
    size_t ib = pick_b(rng);
    if (ib >= ia) ++ib;
    const int support_z = good[ia];
    const int query_z = good[ib];

    Episode ep;
    ep.height = H;
    ep.width = W;
    ep.volume_id = volume_id;
    ep.support_z = support_z;
    ep.query_z = query_z;
    ep.supervoxel_id = sv;
    ep.support_image = extract_slice(volume, support_z);
    ep.support_mask = class_mask_slice(supervoxels, support_z, sv);
    ep.query_image = extract_slice(volume, query_z);
    ep.query_mask = class_mask_slice(supervoxels, query_z, sv);

    auto& timg = cfg.target == TransformTarget::kQuery ? ep.query_image
                                                       : ep.support_image;
    auto& tmask = cfg.target == TransformTarget::kQuery ? ep.query_mask
                                                        : ep.support_mask;
    const std::vector<float> orig_img = timg;
    const std::vector<uint8_t> orig_mask = tmask;
    for (;;) {
      apply_random_transform(timg, tmask, H, W, transforms, rng);
      int fg = 0;
      for (uint8_t v : tmask) fg += v;
      if (fg >= cfg.min_pixels) return ep;
      // Transform wiped out the foreground: restore and resample the
      // transform only, spending one more attempt.
      timg = orig_img;
      tmask = orig_mask;
      if (attempts >= cfg.max_attempts)
        throw DataError("sample_episode: transforms kept erasing foreground");
      ++attempts;
    }
  }
}

}  // namespace adnet
