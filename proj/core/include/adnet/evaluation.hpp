#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adnet/model.hpp"
#include "adnet/volume.hpp"

namespace adnet {

// 2|A∩B| / (|A|+|B|) * 100; both-empty defined as 100, empty-vs-nonempty 0.
double dice(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

// ---------------------------------------------------------------------------
// cross-validation split plan
// ---------------------------------------------------------------------------

struct SplitPlan {
  int n_folds = 0;
  int runs_per_fold = 3;
  std::vector<std::vector<int>> fold_patients;  // contiguous chunks of the shuffle
  std::vector<int> support_patient;             // first patient of each fold

  int fold_of(int patient) const;
};

// Deterministic shuffle of 0..n_patients-1, contiguous fold assignment with
// the remainder going to earlier folds; the first patient of each fold acts
// as support.
SplitPlan make_cv_splits(int n_patients, int n_folds, uint64_t seed,
                         int runs_per_fold = 3);

// ---------------------------------------------------------------------------
// inference protocols
// ---------------------------------------------------------------------------

// Per-slice predictions over one query volume plus protocol bookkeeping.
struct VolumePrediction {
  std::vector<Prediction> slices;
  int support_slices_used = 0;

  std::vector<uint8_t> mask_volume() const;
  // Re-thresholds the stored score maps; slices never scored by the
  // protocol stay background.
  std::vector<uint8_t> mask_volume_at(float threshold) const;
};

// Three-sub-chunk protocol: the class slice range of both volumes is split
// into three near-equal chunks (remainder to the earlier chunks); the middle
// support slice of chunk i segments every query slice of chunk i. Slices
// outside the query class range are predicted background. Requires weak
// query labels (the class range).
VolumePrediction ep1_infer(const Model<float>& m, const Volume& support_vol,
                           const LabelVolume& support_labels,
                           const Volume& query_vol,
                           const LabelVolume& query_weak_labels, uint32_t cls,
                           std::optional<float> t_override = {});

// Single-support protocol: the middle slice of the support class range
// segments every slice of the query volume. No query labels involved.
VolumePrediction ep2_infer(const Model<float>& m, const Volume& support_vol,
                           const LabelVolume& support_labels,
                           const Volume& query_vol, uint32_t cls,
                           std::optional<float> t_override = {});

// Dice of a prediction against the query ground truth for one class.
double score_prediction(const VolumePrediction& pred,
                        const LabelVolume& query_labels, uint32_t cls);

// ---------------------------------------------------------------------------
// results
// ---------------------------------------------------------------------------

struct EvalEntry {
  std::string protocol;
  int fold = 0;
  int run = 0;
  uint32_t cls = 0;
  std::string query_id;
  double dice = 0;
};

struct ClassStats {
  double mean = 0;
  double stddev = 0;  // population
  int64_t n = 0;
};

struct Aggregate {
  std::map<uint32_t, ClassStats> per_class;
  ClassStats overall;
};

Aggregate aggregate(const std::vector<EvalEntry>& entries);

void write_results_csv(const std::vector<EvalEntry>& entries,
                       const std::string& path);
void write_summary_json(const Aggregate& agg, const std::string& path);

// ---------------------------------------------------------------------------
// threshold line search
// ---------------------------------------------------------------------------

// One evaluation task: segment query_vol for cls using support_vol.
struct EvalTask {
  const Volume* support_vol = nullptr;
  const LabelVolume* support_labels = nullptr;
  const Volume* query_vol = nullptr;
  const LabelVolume* query_labels = nullptr;  // scoring (and EP1 weak labels)
  uint32_t cls = 0;
};

struct LineSearchResult {
  std::vector<double> thresholds;
  std::vector<double> mean_dice;
  std::vector<double> std_dice;
  double learned_t = 0;
  double learned_mean_dice = 0;
};

// Evaluates the dice over the tasks for every threshold in
// [t_min, t_min + step, ..., t_max], re-thresholding cached score maps, and
// for the learned T. Protocol "EP1" or "EP2".
LineSearchResult threshold_line_search(const Model<float>& m,
                                       const std::vector<EvalTask>& tasks,
                                       const std::string& protocol,
                                       double t_min, double t_max,
                                       double t_step);

void write_linesearch_csv(const LineSearchResult& r, const std::string& path);

}  // namespace adnet
