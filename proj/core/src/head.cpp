#include "adnet/head.hpp"

#include <cmath>

#include "adnet/model.hpp"

namespace adnet {

void Episode::validate() const {
  const size_t hw = size_t(height) * size_t(width);
  if (height < 1 || width < 1) throw DataError("episode: bad slice shape");
  if (support_image.size() != hw || query_image.size() != hw ||
      support_mask.size() != hw || query_mask.size() != hw)
    throw DataError("episode: image/mask sizes disagree");
  for (uint8_t m : support_mask)
    if (m > 1) throw DataError("episode: support mask not binary");
  for (uint8_t m : query_mask)
    if (m > 1) throw DataError("episode: query mask not binary");
  bool any = false;
  for (uint8_t m : support_mask) any = any || m;
  if (!any) throw DataError("episode: empty support mask");
}

Model<float> detached_model(const Model<float>& m) {
  Model<float> out;
  out.enc_cfg = m.enc_cfg;
  out.head_cfg = m.head_cfg;
  for (size_t i = 0; i < m.enc.kernels.size(); ++i) {
    out.enc.kernels.push_back(m.enc.kernels[i].detached());
    out.enc.biases.push_back(m.enc.biases[i].detached());
  }
  out.head.alpha = m.head.alpha;
  out.head.kappa = m.head.kappa;
  out.head.t = m.head.t.detached();
  return out;
}

CheckpointData model_to_checkpoint(const Model<float>& m) {
  CheckpointData ckpt;
  ckpt.meta["alpha"] = double(m.head.alpha);
  ckpt.meta["kappa"] = double(m.head.kappa);
  ckpt.meta["encoder.in_channels"] = m.enc_cfg.in_channels;
  ckpt.meta["encoder.feature_dim"] = m.enc_cfg.feature_dim;
  ckpt.meta["encoder.downsample"] = m.enc_cfg.downsample;
  for (size_t i = 0; i < m.enc.kernels.size(); ++i) {
    const auto& k = m.enc.kernels[i];
    const auto& b = m.enc.biases[i];
    ckpt.tensors.push_back({"encoder." + std::to_string(i) + ".kernel",
                            k.shape(),
                            {k.value().begin(), k.value().end()}});
    ckpt.tensors.push_back({"encoder." + std::to_string(i) + ".bias",
                            b.shape(),
                            {b.value().begin(), b.value().end()}});
  }
  ckpt.tensors.push_back(
      {"head.threshold", {1}, {m.head.t.value().begin(), m.head.t.value().end()}});
  return ckpt;
}

Model<float> model_from_checkpoint(const CheckpointData& ckpt, bool trainable) {
  Model<float> m;
  m.enc_cfg.widths.clear();

  auto meta = [&](const std::string& key) {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end())
      throw IoError("checkpoint missing meta key: " + key);
    return it->second;
  };
  m.enc_cfg.in_channels = int(meta("encoder.in_channels"));
  m.enc_cfg.feature_dim = int(meta("encoder.feature_dim"));
  m.enc_cfg.downsample = int(meta("encoder.downsample"));
  m.head_cfg.alpha = meta("alpha");
  m.head_cfg.kappa = meta("kappa");

  bool have_t = false;
  for (const auto& t : ckpt.tensors) {
    if (t.name == "head.threshold") {
      if (t.shape != Shape{1}) throw IoError("checkpoint: bad threshold shape");
      m.head.alpha = float(m.head_cfg.alpha);
      m.head.kappa = float(m.head_cfg.kappa);
      m.head.t = Tensor<float>::from_data({1}, t.data, trainable);
      m.head_cfg.t_init = double(t.data[0]);
      have_t = true;
    } else if (t.name.rfind("encoder.", 0) == 0 &&
               t.name.size() > 8 + 7 &&
               t.name.substr(t.name.size() - 7) == ".kernel") {
      if (t.shape.size() != 4) throw IoError("checkpoint: bad kernel shape");
      m.enc_cfg.widths.push_back(t.shape[0]);
      m.enc.kernels.push_back(
          Tensor<float>::from_data(t.shape, t.data, trainable));
    } else if (t.name.rfind("encoder.", 0) == 0 &&
               t.name.substr(t.name.size() - 5) == ".bias") {
      m.enc.biases.push_back(
          Tensor<float>::from_data(t.shape, t.data, trainable));
    } else {
      throw IoError("checkpoint: unrecognized tensor '" + t.name + "'");
    }
  }
  if (!have_t) throw IoError("checkpoint: missing head.threshold");
  if (m.enc.kernels.size() != m.enc.biases.size())
    throw IoError("checkpoint: kernel/bias count mismatch");
  m.enc_cfg.validate();
  return m;
}

void save_model(const Model<float>& m, const std::string& path) {
  save_checkpoint(model_to_checkpoint(m), path);
}

Model<float> load_model(const std::string& path, bool trainable) {
  return model_from_checkpoint(load_checkpoint(path), trainable);
}

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

Prediction infer_slice(const Model<float>& m,
                       const std::vector<SupportSlice>& supports,
                       const std::vector<float>& query_image, int height,
                       int width, std::optional<float> t_override) {
  if (supports.empty()) throw DataError("infer_slice: no support slices");
  const size_t hw = size_t(height) * size_t(width);
  if (query_image.size() != hw)
    throw DataError("infer_slice: query image size mismatch");

  const int d = m.enc_cfg.feature_dim;
  Tape<float> tape;

  // Multi-slice prototype: masked feature sums pooled across all slices
  // before the division, so duplicated support slices change nothing.
  std::vector<double> num(size_t(d), 0.0);
  int64_t den = 0;
  for (const auto& s : supports) {
    if (s.image.size() != hw || s.mask.size() != hw)
      throw DataError("infer_slice: support slice size mismatch");
    bool any = false;
    for (uint8_t v : s.mask) any = any || v;
    if (!any) throw DataError("infer_slice: empty support mask");

    auto xs = Tensor<float>::from_data({1, 1, height, width},
                                       std::vector<float>(s.image), false);
    auto fs = encode(tape, m.enc_cfg, m.enc, xs);
    auto fs_up = bilinear_resize(tape, fs, height, width);
    auto fv = fs_up.value();
    for (int c = 0; c < d; ++c) {
      const float* row = &fv[size_t(int64_t(c) * int64_t(hw))];
      for (size_t i = 0; i < hw; ++i)
        if (s.mask[i]) {
          num[size_t(c)] += double(row[i]);
          if (c == 0) ++den;
        }
    }
  }
  std::vector<float> proto(static_cast<size_t>(d));
  for (int c = 0; c < d; ++c) proto[size_t(c)] = float(num[size_t(c)] / double(den));
  auto p = Tensor<float>::from_data({d}, std::move(proto), false);

  auto xq = Tensor<float>::from_data({1, 1, height, width},
                                     std::vector<float>(query_image), false);
  auto fq = encode(tape, m.enc_cfg, m.enc, xq);
  const Shape& fqs = fq.shape();
  auto fq3 = reshape(tape, fq, {fqs[1], fqs[2], fqs[3]});
  auto scores = anomaly_scores(tape, fq3, p, m.head.alpha);
  auto s4 = reshape(tape, scores, {1, 1, fqs[2], fqs[3]});
  auto s_up = bilinear_resize(tape, s4, height, width);

  const float t_eff = t_override ? *t_override : m.head.threshold();
  const double kappa = double(m.head.kappa);

  Prediction pred;
  pred.height = height;
  pred.width = width;
  pred.scores.assign(s_up.value().begin(), s_up.value().end());
  pred.mask.resize(hw);
  pred.fg_prob.resize(hw);
  for (size_t i = 0; i < hw; ++i) {
    const double z = double(pred.scores[i]) - double(t_eff);
    pred.fg_prob[i] = float(1.0 - 1.0 / (1.0 + std::exp(-kappa * z)));
    pred.mask[i] = pred.scores[i] < t_eff ? 1 : 0;
  }
  return pred;
}

}  // namespace adnet
