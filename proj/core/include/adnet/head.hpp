#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adnet/encoder.hpp"
#include "adnet/tensor.hpp"

namespace adnet {

struct HeadConfig {
  double alpha = 20.0;
  double kappa = 0.5;
  // Initial threshold; defaults to -alpha/2 when unset.
  std::optional<double> t_init;

  void validate() const {
    if (alpha <= 0) throw ConfigError("head: alpha must be > 0");
    if (kappa <= 0) throw ConfigError("head: kappa must be > 0");
  }
  double initial_t() const { return t_init ? *t_init : -alpha / 2.0; }
};

// Learnable scalar threshold T with fixed scale alpha and steepness kappa.
template <class Real>
struct AnomalyHead {
  Tensor<Real> t;  // shape (1)
  Real alpha = Real(20);
  Real kappa = Real(0.5);

  static AnomalyHead make(const HeadConfig& cfg, bool trainable) {
    cfg.validate();
    AnomalyHead h;
    h.alpha = Real(cfg.alpha);
    h.kappa = Real(cfg.kappa);
    h.t = Tensor<Real>::filled({1}, Real(cfg.initial_t()), trainable);
    return h;
  }

  Real threshold() const { return t.value()[0]; }
};

// One support/query slice pair sharing a foreground class.
struct Episode {
  int height = 0;
  int width = 0;
  std::vector<float> support_image;
  std::vector<uint8_t> support_mask;
  std::vector<float> query_image;
  std::vector<uint8_t> query_mask;

  // provenance
  std::string volume_id;
  int support_z = -1;
  int query_z = -1;
  uint32_t supervoxel_id = 0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// forward building blocks
// ---------------------------------------------------------------------------

// p = sum of masked feature vectors / mask count. features: (d, H, W),
// mask length H*W. Throws DataError on an empty mask.
template <class Real>
Tensor<Real> masked_average_pool(Tape<Real>& tape, const Tensor<Real>& features,
                                 const std::vector<uint8_t>& mask) {
  const Shape& fs = features.shape();
  if (fs.size() != 3) throw DataError("masked_average_pool: features must be (d,H,W)");
  const int d = fs[0];
  const int64_t hw = int64_t(fs[1]) * fs[2];
  if (int64_t(mask.size()) != hw)
    throw DataError("masked_average_pool: mask size mismatch");
  int64_t cnt = 0;
  for (uint8_t m : mask) cnt += m ? 1 : 0;
  if (cnt == 0) throw DataError("masked_average_pool: empty mask");

  const bool rg = features.requires_grad();
  auto out = detail::make_output<Real>({d}, rg);
  {
    auto ov = out.value();
    auto fv = features.value();
    for (int c = 0; c < d; ++c) {
      double acc = 0;
      const Real* row = &fv[size_t(int64_t(c) * hw)];
      for (int64_t i = 0; i < hw; ++i)
        if (mask[size_t(i)]) acc += double(row[i]);
      ov[size_t(c)] = Real(acc / double(cnt));
    }
  }
  if (rg) {
    auto m = std::make_shared<std::vector<uint8_t>>(mask);
    tape.record(out, [features, out, m, d, hw, cnt]() {
      const auto& og = out.node()->grad;
      for (int c = 0; c < d; ++c) {
        const Real g = og[size_t(c)] / Real(cnt);
        Real* row = &features.node()->grad[size_t(int64_t(c) * hw)];
        for (int64_t i = 0; i < hw; ++i)
          if ((*m)[size_t(i)]) row[i] += g;
      }
    });
  }
  return out;
}

// S = -alpha * cos(F, p); most anomalous (+alpha) when F opposes p.
template <class Real>
Tensor<Real> anomaly_scores(Tape<Real>& tape, const Tensor<Real>& features,
                            const Tensor<Real>& p, Real alpha) {
  auto cos = cosine_similarity_map(tape, features, p);
  return affine(tape, cos, -alpha, Real(0));
}

// Foreground probability 1 - sigmoid(kappa * (S - T)).
template <class Real>
Tensor<Real> soft_threshold(Tape<Real>& tape, const Tensor<Real>& scores,
                            const AnomalyHead<Real>& head) {
  auto shifted = sub_scalar(tape, scores, head.t);
  auto sig = sigmoid_kappa(tape, shifted, head.kappa);
  return affine(tape, sig, Real(-1), Real(1));
}

template <class Real>
Tensor<Real> segmentation_loss(Tape<Real>& tape, const Tensor<Real>& fg_probs,
                               const std::vector<uint8_t>& target, Real w_fg,
                               Real w_bg) {
  return weighted_bce(tape, fg_probs, target, w_fg, w_bg);
}

// T / alpha; pulls the threshold down over training.
template <class Real>
Tensor<Real> threshold_loss(Tape<Real>& tape, const AnomalyHead<Real>& head) {
  return affine(tape, head.t, Real(1) / head.alpha, Real(0));
}

// ---------------------------------------------------------------------------
// role-reversed alignment loss
// ---------------------------------------------------------------------------

template <class Real>
struct ParResult {
  Tensor<Real> loss;
  bool skipped = false;  // empty predicted query foreground
};

// Binarizes the predicted query mask at 0.5 (constant, no gradient), pools a
// prototype from the query features with it, and segments the support slice
// against its true mask. Gradients flow through features and T.
template <class Real>
ParResult<Real> par_loss(Tape<Real>& tape, const Tensor<Real>& support_features,
                         const std::vector<uint8_t>& support_mask,
                         const Tensor<Real>& query_features,
                         const Tensor<Real>& query_fg_probs, int height,
                         int width, const AnomalyHead<Real>& head, Real w_fg,
                         Real w_bg) {
  std::vector<uint8_t> pred_mask(size_t(query_fg_probs.numel()));
  auto qp = query_fg_probs.value();
  int64_t fg = 0;
  for (int64_t i = 0; i < query_fg_probs.numel(); ++i) {
    pred_mask[size_t(i)] = qp[size_t(i)] > Real(0.5) ? 1 : 0;
    fg += pred_mask[size_t(i)];
  }
  if (fg == 0) return {Tensor<Real>(), true};

  const Shape& qs = query_features.shape();
  auto q_up = bilinear_resize(tape, query_features, height, width);
  auto q_up3 = reshape(tape, q_up, {qs[1], height, width});
  auto proto = masked_average_pool(tape, q_up3, pred_mask);

  const Shape& ss = support_features.shape();
  auto s3 = reshape(tape, support_features, {ss[1], ss[2], ss[3]});
  auto scores = anomaly_scores(tape, s3, proto, head.alpha);
  auto fg_probs = soft_threshold(tape, scores, head);
  auto fg4 = reshape(tape, fg_probs, {1, 1, ss[2], ss[3]});
  auto fg_up = bilinear_resize(tape, fg4, height, width);
  auto fg_img = reshape(tape, fg_up, {height, width});
  return {segmentation_loss(tape, fg_img, support_mask, w_fg, w_bg), false};
}

// ---------------------------------------------------------------------------
// total episode loss
// ---------------------------------------------------------------------------

struct LossToggles {
  bool threshold_term = true;
  bool alignment_term = true;
};

template <class Real>
struct EpisodeLoss {
  Tensor<Real> total;
  double seg = 0;
  double thr = 0;     // T/alpha, reported even when the term is disabled
  double par = 0;     // 0 when disabled or skipped
  bool par_skipped = false;
};

template <class Real>
EpisodeLoss<Real> total_loss(Tape<Real>& tape, const Episode& ep,
                             const EncoderConfig& enc_cfg,
                             const EncoderParams<Real>& enc,
                             const AnomalyHead<Real>& head,
                             const LossToggles& toggles, Real w_fg, Real w_bg) {
  ep.validate();
  const int H = ep.height, W = ep.width;

  auto to_tensor = [&](const std::vector<float>& img) {
    std::vector<Real> v(img.begin(), img.end());
    return Tensor<Real>::from_data({1, 1, H, W}, std::move(v), false);
  };
  auto xs = to_tensor(ep.support_image);
  auto xq = to_tensor(ep.query_image);

  auto fs = encode(tape, enc_cfg, enc, xs);
  auto fq = encode(tape, enc_cfg, enc, xq);
  const Shape& fsh = fs.shape();  // (1, d, hf, wf)

  auto fs_up = bilinear_resize(tape, fs, H, W);
  auto fs_up3 = reshape(tape, fs_up, {fsh[1], H, W});
  auto proto = masked_average_pool(tape, fs_up3, ep.support_mask);

  auto fq3 = reshape(tape, fq, {fsh[1], fsh[2], fsh[3]});
  auto scores = anomaly_scores(tape, fq3, proto, head.alpha);
  auto fg_feat = soft_threshold(tape, scores, head);
  auto fg4 = reshape(tape, fg_feat, {1, 1, fsh[2], fsh[3]});
  auto fg_up = bilinear_resize(tape, fg4, H, W);
  auto fg_img = reshape(tape, fg_up, {H, W});

  EpisodeLoss<Real> result;
  auto seg = segmentation_loss(tape, fg_img, ep.query_mask, w_fg, w_bg);
  result.seg = double(seg.item());
  result.total = seg;

  result.thr = double(head.threshold()) / double(head.alpha);
  if (toggles.threshold_term) {
    auto thr = threshold_loss(tape, head);
    result.total = add(tape, result.total, thr);
  }

  if (toggles.alignment_term) {
    auto par = par_loss(tape, fs, ep.support_mask, fq, fg_img, H, W, head,
                        w_fg, w_bg);
    result.par_skipped = par.skipped;
    if (!par.skipped) {
      result.par = double(par.loss.item());
      result.total = add(tape, result.total, par.loss);
    }
  }
  return result;
}

}  // namespace adnet
