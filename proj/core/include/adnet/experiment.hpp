#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adnet/config.hpp"

namespace adnet {

// In-memory dataset, index-aligned by patient: image, semantic class labels
// (1..num_classes), and supervoxel pseudo-labels once computed.
struct StoredDataset {
  std::vector<std::string> ids;
  std::vector<Volume> images;
  std::vector<LabelVolume> class_labels;
  std::vector<LabelVolume> supervoxels;  // empty until computed
  int num_classes = 0;

  int size() const { return int(images.size()); }
  void validate() const;
};

StoredDataset build_synthetic_dataset(const SyntheticSpec& spec);

// Directory layout: dataset.json manifest plus per-patient RVF pairs
// <id>.rvf.{json,raw} (image), <id>_labels.rvf.* and, when present,
// <id>_svox.rvf.*.
void save_dataset(const StoredDataset& ds, const std::string& dir);
StoredDataset load_dataset(const std::string& dir);

// Fills ds.supervoxels (rho = 0 resolves to the volume-scaled default) and
// returns per-volume supervoxel counts. threads <= 0 uses all cores.
std::vector<int64_t> compute_supervoxels(StoredDataset& ds,
                                         const SupervoxelParams& params,
                                         int threads = 0);

void write_supervoxel_manifest(const SupervoxelParams& params,
                               const std::vector<std::string>& ids,
                               const std::vector<int64_t>& counts,
                               const std::string& path);

// cfg.dataset_path if set, otherwise the synthetic dataset of cfg.
StoredDataset obtain_dataset(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// cross-validated experiment
// ---------------------------------------------------------------------------

struct ExperimentResult {
  SplitPlan plan;
  std::vector<EvalEntry> entries;
  Aggregate agg;
};

// Training pool of one fold: every patient outside the fold.
std::vector<TrainingVolume> training_pool(const StoredDataset& ds,
                                          const SplitPlan& plan, int fold);

// Arm seeds derive from the master seed via (fold, run) so arms are
// reproducible in any execution order.
TrainSettings arm_settings(const ExperimentConfig& cfg, int fold, int run);
SamplerConfig arm_sampler(const ExperimentConfig& cfg, int fold, int run);

// One model trained on every patient, supervoxels computed on demand; the
// standalone train command. Arm seeds use the whole-dataset arm (-1, 0).
TrainOutcome train_full(const ExperimentConfig& cfg, StoredDataset& ds,
                        int threads = 0);

// Held-out evaluation of one fold: the fold's support patient segments each
// of its remaining patients, every class, under cfg.protocol.
std::vector<EvalEntry> evaluate_fold(const Model<float>& m,
                                     const ExperimentConfig& cfg,
                                     const StoredDataset& ds,
                                     const SplitPlan& plan, int fold, int run);

// Full protocol: per (fold, run), train on the out-of-fold pool and evaluate
// on the fold. Writes config.json, supervoxels.json, per-arm checkpoints and
// training logs, results.csv and summary.json into out_dir. Computes
// supervoxels first if the dataset lacks them. Arms may run in parallel;
// outputs are byte-identical across reruns and thread counts.
ExperimentResult run_experiment(const ExperimentConfig& cfg, StoredDataset& ds,
                                const std::string& out_dir, int threads = 0);

// Same evaluation loop for one fixed model, no training (single run per
// fold). Writes config.json, results.csv and summary.json.
ExperimentResult evaluate_model(const Model<float>& m,
                                const ExperimentConfig& cfg,
                                const StoredDataset& ds,
                                const std::string& out_dir);

// Every (support patient, query patient, class) triple of the plan; the
// task list the threshold line search evaluates. Pointers alias ds.
std::vector<EvalTask> make_eval_tasks(const StoredDataset& ds,
                                      const SplitPlan& plan);

// ---------------------------------------------------------------------------
// parameter sweeps
// ---------------------------------------------------------------------------

struct SweepRow {
  double value = 0;
  Aggregate agg;
  std::string arm_dir;
  std::string supervoxel_manifest;  // provenance: which labels this row used
};

// parameter "rho" regenerates supervoxels per value; "kappa" keeps the
// shared supervoxels and only retrains. Each arm owns out_dir/<param>_<i>.
std::vector<SweepRow> sweep_parameter(const ExperimentConfig& base,
                                      const std::string& parameter,
                                      const std::vector<double>& values,
                                      const StoredDataset& base_ds,
                                      const std::string& out_dir,
                                      int threads = 0);

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& parameter, int num_classes,
                     const std::string& path);

}  // namespace adnet
