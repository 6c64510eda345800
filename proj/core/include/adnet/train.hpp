#pragma once

#include <string>
#include <vector>

#include "adnet/episodes.hpp"
#include "adnet/model.hpp"

namespace adnet {

struct TrainSettings {
  int iterations = 2000;
  SgdConfig sgd;
  LossToggles toggles;
  double w_fg = 1.0;
  double w_bg = 0.1;
  uint64_t init_seed = 0;
};

struct TrainLogRecord {
  int iteration = 0;
  double total = 0;
  double loss_seg = 0;
  double loss_thr = 0;
  double loss_par = 0;
  bool par_skipped = false;
  double threshold = 0;  // T after the step
  double lr = 0;
};

// Training data: image plus its precomputed supervoxel pseudo-labels. Class
// annotations are never part of training input.
struct TrainingVolume {
  std::string id;
  const Volume* image = nullptr;
  const LabelVolume* supervoxels = nullptr;
};

struct TrainOutcome {
  Model<float> model;
  std::vector<TrainLogRecord> log;
};

// Episodic self-supervised loop: sample episode, total loss, backward, SGD
// step on encoder parameters and T. Deterministic for fixed seeds. With 0
// iterations the freshly initialized model is returned unchanged.
TrainOutcome train_model(const EncoderConfig& enc_cfg, const HeadConfig& head_cfg,
                         const TrainSettings& settings, const SamplerConfig& sampler,
                         const TransformSpec& transforms,
                         const std::vector<TrainingVolume>& data);

void write_train_log(const std::vector<TrainLogRecord>& log,
                     const std::string& path);

}  // namespace adnet
