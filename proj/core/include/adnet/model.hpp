#pragma once

#include <optional>
#include <string>
#include <vector>

#include "adnet/checkpoint.hpp"
#include "adnet/encoder.hpp"
#include "adnet/head.hpp"

namespace adnet {

// Encoder parameters plus anomaly head; the complete trainable state.
template <class Real>
struct Model {
  EncoderConfig enc_cfg;
  HeadConfig head_cfg;
  EncoderParams<Real> enc;
  AnomalyHead<Real> head;
};

template <class Real>
Model<Real> make_model(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                       uint64_t seed, bool trainable) {
  Model<Real> m;
  m.enc_cfg = enc_cfg;
  m.head_cfg = head_cfg;
  m.enc = init_encoder<Real>(enc_cfg, seed, trainable);
  m.head = AnomalyHead<Real>::make(head_cfg, trainable);
  return m;
}

// Support and query share one parameter set; this is the full list handed
// to the optimizer (kernels, biases, then T).
template <class Real>
std::vector<Tensor<Real>> model_parameters(Model<Real>& m) {
  auto params = m.enc.all();
  params.push_back(m.head.t);
  return params;
}

// Inference-ready copy whose tensors do not require gradients, so forward
// passes skip tape bookkeeping.
Model<float> detached_model(const Model<float>& m);

CheckpointData model_to_checkpoint(const Model<float>& m);
Model<float> model_from_checkpoint(const CheckpointData& ckpt, bool trainable);

void save_model(const Model<float>& m, const std::string& path);
Model<float> load_model(const std::string& path, bool trainable = false);

// ---------------------------------------------------------------------------
// slice inference
// ---------------------------------------------------------------------------

struct SupportSlice {
  std::vector<float> image;
  std::vector<uint8_t> mask;
};

struct Prediction {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> mask;     // foreground where score < T
  std::vector<float> fg_prob;    // 1 - sigmoid(kappa * (S - T))
  std::vector<float> scores;     // anomaly scores upsampled to image size
};

// One prototype pooled over all masked support features (sum of masked
// feature vectors over every slice / total mask count), then per-pixel
// anomaly scoring of the query. Ties S == T classify as background.
// t_override replaces the learned threshold (threshold line search).
Prediction infer_slice(const Model<float>& m,
                       const std::vector<SupportSlice>& supports,
                       const std::vector<float>& query_image, int height,
                       int width, std::optional<float> t_override = {});

}  // namespace adnet
