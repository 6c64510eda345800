#pragma once

#include <random>
#include <string>
#include <vector>

#include "adnet/rng.hpp"
#include "adnet/tensor.hpp"

namespace adnet {

// Small strided conv net standing in for a pretrained backbone. The input is
// lifted to [x, x*x] before the first stage: the cosine head is scale
// invariant, and with zero-init biases a plain conv/relu stack is positively
// homogeneous, so without the lift two intensity levels would produce
// parallel features the head cannot tell apart. Stage i is
// conv3x3 -> bias -> relu; stride-2 stages come first until the configured
// downsampling factor is reached.
struct EncoderConfig {
  int in_channels = 1;
  std::vector<int> widths{16, 32, 32};
  int feature_dim = 32;
  int downsample = 2;

  int stages() const { return int(widths.size()); }

  int stride_of(int stage) const {
    int remaining = downsample;
    for (int i = 0; i < stage; ++i) remaining /= stride_of_impl(remaining);
    return stride_of_impl(remaining);
  }

  void validate() const {
    if (in_channels < 1) throw ConfigError("encoder: in_channels must be >= 1");
    if (widths.empty()) throw ConfigError("encoder: needs at least one stage");
    for (int w : widths)
      if (w < 1) throw ConfigError("encoder: stage widths must be >= 1");
    if (feature_dim != widths.back())
      throw ConfigError("encoder: feature_dim must equal the last stage width");
    if (downsample < 1 || (downsample & (downsample - 1)) != 0)
      throw ConfigError("encoder: downsample must be a power of 2");
    int s = downsample;
    for (int i = 0; i < stages() && s > 1; ++i) s /= 2;
    if (s != 1)
      throw ConfigError("encoder: downsample not achievable with stage count");
  }

private:
  static int stride_of_impl(int remaining) { return remaining > 1 ? 2 : 1; }
};

template <class Real>
struct EncoderParams {
  std::vector<Tensor<Real>> kernels;  // [Cout, Cin, 3, 3] per stage
  std::vector<Tensor<Real>> biases;   // [Cout] per stage

  std::vector<Tensor<Real>> all() const {
    std::vector<Tensor<Real>> out;
    for (size_t i = 0; i < kernels.size(); ++i) {
      out.push_back(kernels[i]);
      out.push_back(biases[i]);
    }
    return out;
  }
};

// He-style init: kernels ~ N(0, 2/fan_in), biases zero.
template <class Real>
EncoderParams<Real> init_encoder(const EncoderConfig& cfg, uint64_t seed,
                                 bool trainable = true) {
  cfg.validate();
  auto rng = make_rng(seed);
  EncoderParams<Real> params;
  int cin = 2 * cfg.in_channels;  // stage 0 sees the [x, x*x] lift
  for (int i = 0; i < cfg.stages(); ++i) {
    const int cout = cfg.widths[size_t(i)];
    const int fan_in = cin * 3 * 3;
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    std::vector<Real> k(size_t(cout) * cin * 3 * 3);
    for (Real& v : k) v = Real(dist(rng));
    params.kernels.push_back(Tensor<Real>::from_data({cout, cin, 3, 3},
                                                     std::move(k), trainable));
    params.biases.push_back(Tensor<Real>::zeros({cout}, trainable));
    cin = cout;
  }
  return params;
}

// x: [1, in_channels, H, W] with H and W divisible by cfg.downsample.
// Returns [1, feature_dim, H/s, W/s].
template <class Real>
Tensor<Real> encode(Tape<Real>& tape, const EncoderConfig& cfg,
                    const EncoderParams<Real>& params, const Tensor<Real>& x) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || xs[1] != cfg.in_channels)
    throw DataError("encode: input must be (1, in_channels, H, W)");
  if (xs[2] % cfg.downsample != 0 || xs[3] % cfg.downsample != 0)
    throw DataError("encode: H and W must be divisible by the downsample factor");
  if (int(params.kernels.size()) != cfg.stages())
    throw DataError("encode: parameter/config stage mismatch");

  Tensor<Real> h = concat_channels(tape, x, mul(tape, x, x));
  for (int i = 0; i < cfg.stages(); ++i) {
    h = conv2d(tape, h, params.kernels[size_t(i)], cfg.stride_of(i), 1);
    h = bias_add(tape, h, params.biases[size_t(i)]);
    h = relu(tape, h);
  }
  return h;
}

}  // namespace adnet
