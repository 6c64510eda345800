#pragma once

#include <optional>
#include <string>

#include "adnet/episodes.hpp"
#include "adnet/evaluation.hpp"
#include "adnet/supervoxel.hpp"
#include "adnet/synthetic.hpp"
#include "adnet/train.hpp"

namespace adnet {

// Complete experiment description. JSON keys mirror the field names; unknown
// keys are rejected with the offending key named.
struct ExperimentConfig {
  // Either a directory of RVF volumes (with labels) or a synthetic spec.
  std::optional<std::string> dataset_path;
  SyntheticSpec synthetic;

  SupervoxelParams supervoxel{/*rho=*/0, /*scale_k=*/1.0, /*presmooth_sigma=*/0.0};
  SamplerConfig sampler;
  TransformSpec transforms;
  EncoderConfig encoder;
  HeadConfig head;
  SgdConfig sgd;
  int iterations = 2000;
  LossToggles loss;
  double w_fg = 1.0;
  double w_bg = 0.1;

  std::string protocol = "EP2";
  uint64_t split_seed = 0;
  int n_folds = 5;
  int runs_per_fold = 3;
  uint64_t seed = 0;  // master seed for per-arm sub-streams

  // rho = 0 requests the volume-scaled default, max(1, num_voxels / 200).
  int64_t resolved_rho(int64_t num_voxels) const;

  void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace adnet
