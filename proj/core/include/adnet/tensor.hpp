#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "adnet/errors.hpp"

namespace adnet {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i)
    out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

template <class Real>
struct TensorNode {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // allocated only when requires_grad
  bool requires_grad = false;
};

// Dense tensor with shared storage. Copies are shallow; ops on a Tape
// produce new tensors. Gradients live next to the values and accumulate
// additively across backward passes until zero_grad().
template <class Real>
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), Real(0), requires_grad);
  }

  static Tensor filled(Shape shape, Real v, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<Real>>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(size_t(shape_numel(t.node_->shape)), v);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(t.node_->value.size(), Real(0));
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<Real> data,
                          bool requires_grad = false) {
    if (shape_numel(shape) != int64_t(data.size()))
      throw DataError("tensor data length does not match shape " +
                      shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<Real>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    if (requires_grad) t.node_->grad.assign(t.node_->value.size(), Real(0));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return int64_t(node_->value.size()); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  std::span<Real> value() { return node_->value; }
  std::span<const Real> value() const { return node_->value; }
  std::span<Real> grad() {
    if (!requires_grad()) throw DataError("tensor has no gradient buffer");
    return node_->grad;
  }
  std::span<const Real> grad() const {
    if (!requires_grad()) throw DataError("tensor has no gradient buffer");
    return node_->grad;
  }

  Real item() const {
    if (numel() != 1) throw DataError("item() requires a scalar tensor");
    return node_->value[0];
  }

  void zero_grad() {
    if (requires_grad())
      std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  // Value copy with no gradient tracking.
  Tensor detached() const {
    return from_data(node_->shape,
                     std::vector<Real>(node_->value.begin(), node_->value.end()),
                     false);
  }

  template <class Other>
  Tensor<Other> cast(bool requires_grad = false) const {
    std::vector<Other> v(node_->value.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = Other(node_->value[i]);
    return Tensor<Other>::from_data(node_->shape, std::move(v), requires_grad);
  }

  bool same_storage(const Tensor& o) const { return node_ == o.node_; }

  std::shared_ptr<TensorNode<Real>> node() const { return node_; }

private:
  std::shared_ptr<TensorNode<Real>> node_;
};

// Records one closure per op in execution order. backward() zeroes the
// gradients of every recorded op output (leaves keep theirs, so parameter
// gradients accumulate across passes), seeds the loss with 1 and replays
// the closures in reverse.
template <class Real>
class Tape {
public:
  void record(const Tensor<Real>& out, std::function<void()> fn) {
    steps_.push_back({out.node(), std::move(fn)});
  }

  void backward(const Tensor<Real>& loss) {
    if (loss.numel() != 1) throw DataError("backward requires a scalar loss");
    if (!loss.requires_grad()) return;  // loss is a constant
    for (auto& s : steps_)
      if (s.out->requires_grad)
        std::fill(s.out->grad.begin(), s.out->grad.end(), Real(0));
    loss.node()->grad[0] += Real(1);
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->fn();
  }

  void clear() { steps_.clear(); }
  size_t num_ops() const { return steps_.size(); }

private:
  struct Step {
    std::shared_ptr<TensorNode<Real>> out;
    std::function<void()> fn;
  };
  std::vector<Step> steps_;
};

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class Real>
Tensor<Real> make_output(Shape shape, bool requires_grad) {
  return Tensor<Real>::zeros(std::move(shape), requires_grad);
}

// Output index range [o0, o1] of a conv tap so that the sampled input index
// o*stride - pad + k stays inside [0, in). o1 < o0 means the tap never hits.
inline void conv_tap_range(int k, int in, int out, int stride, int pad,
                           int& o0, int& o1) {
  o0 = pad - k <= 0 ? 0 : (pad - k + stride - 1) / stride;
  const int top = in - 1 + pad - k;
  o1 = top < 0 ? -1 : std::min(out - 1, top / stride);
}

template <class Real>
void require_same_shape(const Tensor<Real>& a, const Tensor<Real>& b,
                        const char* op) {
  if (a.shape() != b.shape())
    throw DataError(std::string(op) + ": shape mismatch " +
                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise and reduction ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> add(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "add");
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = detail::make_output<Real>(a.shape(), rg);
  auto ov = out.value();
  auto av = a.value(), bv = b.value();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] + bv[i];
  if (rg)
    tape.record(out, [a, b, out]() {
      const auto& og = out.node()->grad;
      if (a.requires_grad())
        for (int64_t i = 0; i < a.numel(); ++i) a.node()->grad[size_t(i)] += og[size_t(i)];
      if (b.requires_grad())
        for (int64_t i = 0; i < b.numel(); ++i) b.node()->grad[size_t(i)] += og[size_t(i)];
    });
  return out;
}

template <class Real>
Tensor<Real> sub(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "sub");
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = detail::make_output<Real>(a.shape(), rg);
  auto ov = out.value();
  auto av = a.value(), bv = b.value();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] - bv[i];
  if (rg)
    tape.record(out, [a, b, out]() {
      const auto& og = out.node()->grad;
      if (a.requires_grad())
        for (int64_t i = 0; i < a.numel(); ++i) a.node()->grad[size_t(i)] += og[size_t(i)];
      if (b.requires_grad())
        for (int64_t i = 0; i < b.numel(); ++i) b.node()->grad[size_t(i)] -= og[size_t(i)];
    });
  return out;
}

template <class Real>
Tensor<Real> mul(Tape<Real>& tape, const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_same_shape(a, b, "mul");
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = detail::make_output<Real>(a.shape(), rg);
  auto ov = out.value();
  auto av = a.value(), bv = b.value();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] * bv[i];
  if (rg)
    tape.record(out, [a, b, out]() {
      const auto& og = out.node()->grad;
      if (a.requires_grad())
        for (int64_t i = 0; i < a.numel(); ++i)
          a.node()->grad[size_t(i)] += og[size_t(i)] * b.node()->value[size_t(i)];
      if (b.requires_grad())
        for (int64_t i = 0; i < b.numel(); ++i)
          b.node()->grad[size_t(i)] += og[size_t(i)] * a.node()->value[size_t(i)];
    });
  return out;
}

// scale * x + shift with scalar constants.
template <class Real>
Tensor<Real> affine(Tape<Real>& tape, const Tensor<Real>& x, Real scale,
                    Real shift) {
  const bool rg = x.requires_grad();
  auto out = detail::make_output<Real>(x.shape(), rg);
  auto ov = out.value();
  auto xv = x.value();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = scale * xv[i] + shift;
  if (rg)
    tape.record(out, [x, out, scale]() {
      const auto& og = out.node()->grad;
      for (int64_t i = 0; i < x.numel(); ++i)
        x.node()->grad[size_t(i)] += scale * og[size_t(i)];
    });
  return out;
}

template <class Real>
Tensor<Real> relu(Tape<Real>& tape, const Tensor<Real>& x) {
  const bool rg = x.requires_grad();
  auto out = detail::make_output<Real>(x.shape(), rg);
  auto ov = out.value();
  auto xv = x.value();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] > Real(0) ? xv[i] : Real(0);
  if (rg)
    tape.record(out, [x, out]() {
      // subgradient at exactly 0 is 0
      const auto& og = out.node()->grad;
      for (int64_t i = 0; i < x.numel(); ++i)
        if (x.node()->value[size_t(i)] > Real(0))
          x.node()->grad[size_t(i)] += og[size_t(i)];
    });
  return out;
}

template <class Real>
Tensor<Real> sum(Tape<Real>& tape, const Tensor<Real>& x) {
  const bool rg = x.requires_grad();
  auto out = detail::make_output<Real>({1}, rg);
  double acc = 0;
  auto xv = x.value();
  for (int64_t i = 0; i < x.numel(); ++i) acc += double(xv[i]);
  out.value()[0] = Real(acc);
  if (rg)
    tape.record(out, [x, out]() {
      const Real g = out.node()->grad[0];
      for (int64_t i = 0; i < x.numel(); ++i) x.node()->grad[size_t(i)] += g;
    });
  return out;
}

template <class Real>
Tensor<Real> mean(Tape<Real>& tape, const Tensor<Real>& x) {
  const bool rg = x.requires_grad();
  auto out = detail::make_output<Real>({1}, rg);
  double acc = 0;
  auto xv = x.value();
  for (int64_t i = 0; i < x.numel(); ++i) acc += double(xv[i]);
  const int64_t n = x.numel();
  out.value()[0] = Real(acc / double(n));
  if (rg)
    tape.record(out, [x, out, n]() {
      const Real g = out.node()->grad[0] / Real(n);
      for (int64_t i = 0; i < x.numel(); ++i) x.node()->grad[size_t(i)] += g;
    });
  return out;
}

template <class Real>
Tensor<Real> reshape(Tape<Real>& tape, const Tensor<Real>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DataError("reshape: element count mismatch " + shape_str(shape));
  const bool rg = x.requires_grad();
  auto out = Tensor<Real>::from_data(
      std::move(shape), std::vector<Real>(x.value().begin(), x.value().end()), rg);
  if (rg)
    tape.record(out, [x, out]() {
      const auto& og = out.node()->grad;
      for (int64_t i = 0; i < x.numel(); ++i)
        x.node()->grad[size_t(i)] += og[size_t(i)];
    });
  return out;
}

// Concatenates two NCHW tensors along the channel axis; N, H, W must agree.
template <class Real>
Tensor<Real> concat_channels(Tape<Real>& tape, const Tensor<Real>& a,
                             const Tensor<Real>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] ||
      as[3] != bs[3])
    throw DataError("concat_channels: incompatible shapes " + shape_str(as) +
                    " vs " + shape_str(bs));
  const int64_t n = as[0], hw = int64_t(as[2]) * as[3];
  const int64_t ca = as[1] * hw, cb = bs[1] * hw;
  const bool rg = a.requires_grad() || b.requires_grad();
  auto out = detail::make_output<Real>({as[0], as[1] + bs[1], as[2], as[3]}, rg);
  auto ov = out.value();
  auto av = a.value(), bv = b.value();
  for (int64_t i = 0; i < n; ++i) {
    std::copy(av.begin() + i * ca, av.begin() + (i + 1) * ca,
              ov.begin() + i * (ca + cb));
    std::copy(bv.begin() + i * cb, bv.begin() + (i + 1) * cb,
              ov.begin() + i * (ca + cb) + ca);
  }
  if (rg)
    tape.record(out, [a, b, out, n, ca, cb]() {
      const auto& og = out.node()->grad;
      for (int64_t i = 0; i < n; ++i) {
        if (a.requires_grad())
          for (int64_t j = 0; j < ca; ++j)
            a.node()->grad[size_t(i * ca + j)] += og[size_t(i * (ca + cb) + j)];
        if (b.requires_grad())
          for (int64_t j = 0; j < cb; ++j)
            b.node()->grad[size_t(i * cb + j)] +=
                og[size_t(i * (ca + cb) + ca + j)];
      }
    });
  return out;
}

// x - t broadcast over all positions; t is a 1-element tensor (the learned
// threshold), which may require grad.
template <class Real>
Tensor<Real> sub_scalar(Tape<Real>& tape, const Tensor<Real>& x,
                        const Tensor<Real>& t) {
  if (t.numel() != 1) throw DataError("sub_scalar: t must be a scalar tensor");
  const bool rg = x.requires_grad() || t.requires_grad();
  auto out = detail::make_output<Real>(x.shape(), rg);
  auto ov = out.value();
  auto xv = x.value();
  const Real tv = t.value()[0];
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] - tv;
  if (rg)
    tape.record(out, [x, t, out]() {
      const auto& og = out.node()->grad;
      if (x.requires_grad())
        for (int64_t i = 0; i < x.numel(); ++i)
          x.node()->grad[size_t(i)] += og[size_t(i)];
      if (t.requires_grad()) {
        double acc = 0;
        for (int64_t i = 0; i < out.numel(); ++i) acc += double(og[size_t(i)]);
        t.node()->grad[0] -= Real(acc);
      }
    });
  return out;
}

// 1 / (1 + exp(-kappa * z)).
template <class Real>
Tensor<Real> sigmoid_kappa(Tape<Real>& tape, const Tensor<Real>& z, Real kappa) {
  if (!(kappa > Real(0))) throw DataError("sigmoid_kappa: kappa must be > 0");
  const bool rg = z.requires_grad();
  auto out = detail::make_output<Real>(z.shape(), rg);
  auto ov = out.value();
  auto zv = z.value();
  for (int64_t i = 0; i < z.numel(); ++i)
    ov[i] = Real(1.0 / (1.0 + std::exp(-double(kappa) * double(zv[i]))));
  if (rg)
    tape.record(out, [z, out, kappa]() {
      const auto& og = out.node()->grad;
      const auto& sv = out.node()->value;
      for (int64_t i = 0; i < z.numel(); ++i) {
        const Real s = sv[size_t(i)];
        z.node()->grad[size_t(i)] += og[size_t(i)] * kappa * s * (Real(1) - s);
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

// Cross-correlation of x[N,Cin,H,W] with kernel[Cout,Cin,kh,kw].
template <class Real>
Tensor<Real> conv2d(Tape<Real>& tape, const Tensor<Real>& x,
                    const Tensor<Real>& kernel, int stride, int pad) {
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4)
    throw DataError("conv2d: expects 4-axis input and kernel");
  if (xs[1] != ks[1])
    throw DataError("conv2d: channel mismatch " + shape_str(xs) + " vs " +
                    shape_str(ks));
  if (stride < 1 || pad < 0) throw DataError("conv2d: bad stride/pad");
  const int N = xs[0], Ci = xs[1], H = xs[2], W = xs[3];
  const int Co = ks[0], kh = ks[2], kw = ks[3];
  if (H + 2 * pad < kh || W + 2 * pad < kw)
    throw DataError("conv2d: kernel larger than padded input");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;

  const bool rg = x.requires_grad() || kernel.requires_grad();
  auto out = detail::make_output<Real>({N, Co, Ho, Wo}, rg);

  {
    auto ov = out.value();
    auto xv = x.value();
    auto kv = kernel.value();
    for (int n = 0; n < N; ++n)
      for (int co = 0; co < Co; ++co) {
        Real* optr = &ov[size_t(((int64_t(n) * Co + co) * Ho) * Wo)];
        for (int ci = 0; ci < Ci; ++ci) {
          const Real* xptr = &xv[size_t(((int64_t(n) * Ci + ci) * H) * W)];
          const Real* kptr = &kv[size_t(((int64_t(co) * Ci + ci) * kh) * kw)];
          for (int ky = 0; ky < kh; ++ky) {
            int oy0, oy1;
            detail::conv_tap_range(ky, H, Ho, stride, pad, oy0, oy1);
            for (int kx = 0; kx < kw; ++kx) {
              const Real wk = kptr[ky * kw + kx];
              int ox0, ox1;
              detail::conv_tap_range(kx, W, Wo, stride, pad, ox0, ox1);
              for (int oy = oy0; oy <= oy1; ++oy) {
                const int iy = oy * stride - pad + ky;
                const Real* xrow = xptr + int64_t(iy) * W - pad + kx;
                Real* orow = optr + int64_t(oy) * Wo;
                for (int ox = ox0; ox <= ox1; ++ox)
                  orow[ox] += wk * xrow[ox * stride];
              }
            }
          }
        }
      }
  }

  if (rg)
    tape.record(out, [x, kernel, out, stride, pad, N, Ci, H, W, Co, kh, kw, Ho,
                      Wo]() {
      const auto& og = out.node()->grad;
      const bool gx = x.requires_grad();
      const bool gk = kernel.requires_grad();
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const Real* gptr = &og[size_t(((int64_t(n) * Co + co) * Ho) * Wo)];
          for (int ci = 0; ci < Ci; ++ci) {
            const Real* xptr =
                &x.node()->value[size_t(((int64_t(n) * Ci + ci) * H) * W)];
            Real* dxptr =
                gx ? &x.node()->grad[size_t(((int64_t(n) * Ci + ci) * H) * W)]
                   : nullptr;
            const int64_t kbase = ((int64_t(co) * Ci + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky) {
              int oy0, oy1;
              detail::conv_tap_range(ky, H, Ho, stride, pad, oy0, oy1);
              for (int kx = 0; kx < kw; ++kx) {
                int ox0, ox1;
                detail::conv_tap_range(kx, W, Wo, stride, pad, ox0, ox1);
                const Real wk = kernel.node()->value[size_t(kbase + ky * kw + kx)];
                double kacc = 0;
                for (int oy = oy0; oy <= oy1; ++oy) {
                  const int iy = oy * stride - pad + ky;
                  const Real* grow = gptr + int64_t(oy) * Wo;
                  const int64_t xoff = int64_t(iy) * W - pad + kx;
                  if (gx) {
                    Real* dxrow = dxptr + xoff;
                    for (int ox = ox0; ox <= ox1; ++ox)
                      dxrow[ox * stride] += wk * grow[ox];
                  }
                  if (gk) {
                    const Real* xrow = xptr + xoff;
                    for (int ox = ox0; ox <= ox1; ++ox)
                      kacc += double(xrow[ox * stride]) * double(grow[ox]);
                  }
                }
                if (gk)
                  kernel.node()->grad[size_t(kbase + ky * kw + kx)] += Real(kacc);
              }
            }
          }
        }
    });
  return out;
}

// Adds bias[C] to every spatial position of x[N,C,H,W].
template <class Real>
Tensor<Real> bias_add(Tape<Real>& tape, const Tensor<Real>& x,
                      const Tensor<Real>& bias) {
  const Shape& xs = x.shape();
  if (xs.size() != 4 || bias.shape() != Shape{xs[1]})
    throw DataError("bias_add: bias must have shape (C)");
  const int N = xs[0], C = xs[1];
  const int64_t HW = int64_t(xs[2]) * xs[3];
  const bool rg = x.requires_grad() || bias.requires_grad();
  auto out = detail::make_output<Real>(xs, rg);
  auto ov = out.value();
  auto xv = x.value();
  auto bv = bias.value();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Real b = bv[size_t(c)];
      const int64_t base = (int64_t(n) * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) ov[size_t(base + i)] = xv[size_t(base + i)] + b;
    }
  if (rg)
    tape.record(out, [x, bias, out, N, C, HW]() {
      const auto& og = out.node()->grad;
      if (x.requires_grad())
        for (int64_t i = 0; i < x.numel(); ++i)
          x.node()->grad[size_t(i)] += og[size_t(i)];
      if (bias.requires_grad())
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const int64_t base = (int64_t(n) * C + c) * HW;
            double acc = 0;
            for (int64_t i = 0; i < HW; ++i) acc += double(og[size_t(base + i)]);
            bias.node()->grad[size_t(c)] += Real(acc);
          }
    });
  return out;
}

// ---------------------------------------------------------------------------
// bilinear resize
// ---------------------------------------------------------------------------

// Half-pixel-center convention: source position of output index i is
// (i + 0.5) * (in / out) - 0.5, clamped to the valid range.
template <class Real>
Tensor<Real> bilinear_resize(Tape<Real>& tape, const Tensor<Real>& x,
                             int out_h, int out_w) {
  const Shape& xs = x.shape();
  if (xs.size() != 4) throw DataError("bilinear_resize: expects 4-axis input");
  if (out_h < 1 || out_w < 1) throw DataError("bilinear_resize: bad target");
  const int N = xs[0], C = xs[1], h = xs[2], w = xs[3];

  struct Tap {
    int i0, i1;
    Real f;  // weight of i1
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(static_cast<size_t>(out));
    const double scale = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
      double s = (o + 0.5) * scale - 0.5;
      int i0 = int(std::floor(s));
      double f = s - i0;
      int i1 = i0 + 1;
      i0 = std::clamp(i0, 0, in - 1);
      i1 = std::clamp(i1, 0, in - 1);
      taps[size_t(o)] = {i0, i1, Real(f)};
    }
    return taps;
  };
  auto ty = make_taps(h, out_h);
  auto tx = make_taps(w, out_w);

  const bool rg = x.requires_grad();
  auto out = detail::make_output<Real>({N, C, out_h, out_w}, rg);
  {
    auto ov = out.value();
    auto xv = x.value();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const Real* src = &xv[size_t((int64_t(n) * C + c) * h * w)];
        Real* dst = &ov[size_t((int64_t(n) * C + c) * out_h * out_w)];
        for (int oy = 0; oy < out_h; ++oy) {
          const Tap& a = ty[size_t(oy)];
          const Real* r0 = src + int64_t(a.i0) * w;
          const Real* r1 = src + int64_t(a.i1) * w;
          Real* drow = dst + int64_t(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const Tap& b = tx[size_t(ox)];
            const Real v0 = r0[b.i0] + b.f * (r0[b.i1] - r0[b.i0]);
            const Real v1 = r1[b.i0] + b.f * (r1[b.i1] - r1[b.i0]);
            drow[ox] = v0 + a.f * (v1 - v0);
          }
        }
      }
  }
  if (rg)
    tape.record(out, [x, out, ty, tx, N, C, h, w, out_h, out_w]() {
      const auto& og = out.node()->grad;
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          Real* dsrc = &x.node()->grad[size_t((int64_t(n) * C + c) * h * w)];
          const Real* dout = &og[size_t((int64_t(n) * C + c) * out_h * out_w)];
          for (int oy = 0; oy < out_h; ++oy) {
            const Tap& a = ty[size_t(oy)];
            for (int ox = 0; ox < out_w; ++ox) {
              const Tap& b = tx[size_t(ox)];
              const Real g = dout[int64_t(oy) * out_w + ox];
              const Real wy1 = a.f, wy0 = Real(1) - a.f;
              const Real wx1 = b.f, wx0 = Real(1) - b.f;
              dsrc[int64_t(a.i0) * w + b.i0] += g * wy0 * wx0;
              dsrc[int64_t(a.i0) * w + b.i1] += g * wy0 * wx1;
              dsrc[int64_t(a.i1) * w + b.i0] += g * wy1 * wx0;
              dsrc[int64_t(a.i1) * w + b.i1] += g * wy1 * wx1;
            }
          }
        }
    });
  return out;
}

// ---------------------------------------------------------------------------
// cosine similarity map
// ---------------------------------------------------------------------------

// cos(F(y,x), p) per position of f[d,h,w]; 1e-8 is added to each norm.
// Accumulation runs in 64-bit regardless of Real so the unit-vector case
// rounds to exactly 1.
template <class Real>
Tensor<Real> cosine_similarity_map(Tape<Real>& tape, const Tensor<Real>& f,
                                   const Tensor<Real>& p) {
  const Shape& fs = f.shape();
  if (fs.size() != 3) throw DataError("cosine_similarity_map: f must be (d,h,w)");
  if (p.shape() != Shape{fs[0]})
    throw DataError("cosine_similarity_map: prototype dim mismatch");
  const int d = fs[0], h = fs[1], w = fs[2];
  const int64_t hw = int64_t(h) * w;
  constexpr double kEps = 1e-8;

  double p_sq = 0;
  auto pv = p.value();
  for (int c = 0; c < d; ++c) p_sq += double(pv[c]) * double(pv[c]);
  if (p_sq == 0) throw DataError("cosine_similarity_map: zero prototype");
  const double p_norm = std::sqrt(p_sq) + kEps;

  const bool rg = f.requires_grad() || p.requires_grad();
  auto out = detail::make_output<Real>({h, w}, rg);
  // Cached per-position dot products and norms for the backward pass.
  auto dots = std::make_shared<std::vector<double>>(size_t(hw));
  auto norms = std::make_shared<std::vector<double>>(size_t(hw));
  {
    auto ov = out.value();
    auto fv = f.value();
    for (int64_t i = 0; i < hw; ++i) {
      double dot = 0, f_sq = 0;
      for (int c = 0; c < d; ++c) {
        const double fc = double(fv[size_t(c * hw + i)]);
        dot += fc * double(pv[size_t(c)]);
        f_sq += fc * fc;
      }
      const double f_norm = std::sqrt(f_sq) + kEps;
      (*dots)[size_t(i)] = dot;
      (*norms)[size_t(i)] = f_norm;
      ov[size_t(i)] = Real(std::clamp(dot / (f_norm * p_norm), -1.0, 1.0));
    }
  }
  if (rg)
    tape.record(out, [f, p, out, dots, norms, p_norm, d, hw]() {
      constexpr double kE = 1e-8;
      const auto& og = out.node()->grad;
      const bool gf = f.requires_grad();
      const bool gp = p.requires_grad();
      const auto& fv = f.node()->value;
      const auto& pvv = p.node()->value;
      for (int64_t i = 0; i < hw; ++i) {
        const double g = double(og[size_t(i)]);
        if (g == 0) continue;
        const double f_norm = (*norms)[size_t(i)];
        const double dot = (*dots)[size_t(i)];
        const double inv = 1.0 / (f_norm * p_norm);
        // d cos / d f_c = p_c * inv - dot * inv / (f_norm * ||f||) * f_c
        // with ||f|| = f_norm - eps (norm before the epsilon shift).
        const double fn_raw = f_norm - kE;
        const double fterm =
            fn_raw > 0 ? dot * inv / (f_norm * fn_raw) : 0.0;
        const double pn_raw = p_norm - kE;
        const double pterm = dot * inv / (p_norm * pn_raw);
        for (int c = 0; c < d; ++c) {
          const double fc = double(fv[size_t(c * hw + i)]);
          const double pc = double(pvv[size_t(c)]);
          if (gf)
            f.node()->grad[size_t(c * hw + i)] +=
                Real(g * (pc * inv - fterm * fc));
          if (gp)
            p.node()->grad[size_t(c)] += Real(g * (fc * inv - pterm * pc));
        }
      }
    });
  return out;
}

// ---------------------------------------------------------------------------
// weighted binary cross-entropy
// ---------------------------------------------------------------------------

// -(1/K) sum[ w_fg*y*log(p) + w_bg*(1-y)*log(1-p) ] with p clamped to
// [1e-7, 1-1e-7]. The target is constant.
template <class Real>
Tensor<Real> weighted_bce(Tape<Real>& tape, const Tensor<Real>& pred,
                          const std::vector<uint8_t>& target, Real w_fg,
                          Real w_bg) {
  if (int64_t(target.size()) != pred.numel())
    throw DataError("weighted_bce: target size mismatch");
  constexpr double kClamp = 1e-7;
  const int64_t K = pred.numel();
  const bool rg = pred.requires_grad();
  auto out = detail::make_output<Real>({1}, rg);
  double acc = 0;
  auto pv = pred.value();
  for (int64_t i = 0; i < K; ++i) {
    const double p = std::clamp(double(pv[size_t(i)]), kClamp, 1.0 - kClamp);
    if (target[size_t(i)])
      acc += double(w_fg) * std::log(p);
    else
      acc += double(w_bg) * std::log(1.0 - p);
  }
  out.value()[0] = Real(-acc / double(K));
  if (rg) {
    // The closure owns a copy of the target; the tape may outlive the caller.
    auto tgt = std::make_shared<std::vector<uint8_t>>(target);
    tape.record(out, [pred, out, tgt, w_fg, w_bg, K]() {
      constexpr double kC = 1e-7;
      const Real g = out.node()->grad[0];
      if (g == Real(0)) return;
      const auto& pv2 = pred.node()->value;
      for (int64_t i = 0; i < K; ++i) {
        const double p = double(pv2[size_t(i)]);
        if (p < kC || p > 1.0 - kC) continue;  // clamped: zero slope
        double dp;
        if ((*tgt)[size_t(i)])
          dp = -double(w_fg) / p / double(K);
        else
          dp = double(w_bg) / (1.0 - p) / double(K);
        pred.node()->grad[size_t(i)] += g * Real(dp);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// SGD with momentum, weight decay and stepwise LR decay
// ---------------------------------------------------------------------------

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double decay_per_1k = 0.98;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("sgd: learning_rate must be > 0");
    if (momentum < 0 || momentum >= 1)
      throw ConfigError("sgd: momentum must be in [0, 1)");
    if (weight_decay < 0) throw ConfigError("sgd: weight_decay must be >= 0");
    if (decay_per_1k <= 0 || decay_per_1k > 1)
      throw ConfigError("sgd: decay_per_1k must be in (0, 1]");
  }

  // lr(i) = lr0 * decay^floor(i/1000), i counted from 0.
  double lr_at(int64_t iteration) const {
    return learning_rate * std::pow(decay_per_1k, double(iteration / 1000));
  }
};

template <class Real>
struct SgdState {
  std::vector<std::vector<Real>> velocity;
};

// v <- momentum*v + grad + wd*param; param <- param - lr(iter)*v.
template <class Real>
void sgd_step(std::vector<Tensor<Real>>& params, SgdState<Real>& state,
              const SgdConfig& cfg, int64_t iteration) {
  cfg.validate();
  if (state.velocity.empty()) {
    state.velocity.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i)
      state.velocity[i].assign(size_t(params[i].numel()), Real(0));
  }
  if (state.velocity.size() != params.size())
    throw DataError("sgd_step: state/param count mismatch");
  const Real lr = Real(cfg.lr_at(iteration));
  const Real mom = Real(cfg.momentum);
  const Real wd = Real(cfg.weight_decay);
  for (size_t i = 0; i < params.size(); ++i) {
    auto& v = state.velocity[i];
    if (int64_t(v.size()) != params[i].numel())
      throw DataError("sgd_step: velocity shape mismatch");
    auto pv = params[i].value();
    auto pg = params[i].grad();
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = mom * v[j] + pg[j] + wd * pv[j];
      pv[j] -= lr * v[j];
    }
  }
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<double> per_input;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Central finite differences against the tape gradients, 64-bit only.
// make_loss must rebuild the loss from the current input values on the
// given tape. Relative error uses max(1, |analytic|, |numeric|) as scale.
template <class Fn>
GradCheckReport grad_check(Fn&& make_loss, std::vector<Tensor<double>> inputs,
                           double step) {
  Tape<double> tape;
  Tensor<double> loss = make_loss(tape);
  for (auto& in : inputs) in.zero_grad();
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs)
    analytic.emplace_back(in.grad().begin(), in.grad().end());

  GradCheckReport report;
  report.per_input.assign(inputs.size(), 0.0);
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto vals = inputs[i].value();
    for (int64_t j = 0; j < inputs[i].numel(); ++j) {
      const double orig = vals[size_t(j)];
      vals[size_t(j)] = orig + step;
      Tape<double> tp;
      const double lp = make_loss(tp).item();
      vals[size_t(j)] = orig - step;
      Tape<double> tm;
      const double lm = make_loss(tm).item();
      vals[size_t(j)] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = analytic[i][size_t(j)];
      const double scale = std::max({1.0, std::abs(a), std::abs(numeric)});
      const double rel = std::abs(a - numeric) / scale;
      report.per_input[i] = std::max(report.per_input[i], rel);
      report.max_rel_error = std::max(report.max_rel_error, rel);
    }
  }
  return report;
}

}  // namespace adnet
