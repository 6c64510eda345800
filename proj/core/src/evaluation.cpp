#include "adnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "adnet/rng.hpp"
#include "json.hpp"

namespace adnet {

double dice(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw DataError("dice: mask size mismatch");
  int64_t ca = 0, cb = 0, inter = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ca += a[i] ? 1 : 0;
    cb += b[i] ? 1 : 0;
    inter += (a[i] && b[i]) ? 1 : 0;
  }
  if (ca + cb == 0) return 100.0;  // vacuously perfect
  return 200.0 * double(inter) / double(ca + cb);
}

// ---------------------------------------------------------------------------
// split plan
// ---------------------------------------------------------------------------

int SplitPlan::fold_of(int patient) const {
  for (int f = 0; f < int(fold_patients.size()); ++f)
    for (int p : fold_patients[size_t(f)])
      if (p == patient) return f;
  return -1;
}

SplitPlan make_cv_splits(int n_patients, int n_folds, uint64_t seed,
                         int runs_per_fold) {
  if (n_folds < 1) throw ConfigError("splits: n_folds must be >= 1");
  if (runs_per_fold < 1) throw ConfigError("splits: runs_per_fold must be >= 1");
  if (n_patients < n_folds)
    throw DataError("splits: fewer patients than folds");

  std::vector<int> order(static_cast<size_t>(n_patients));
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitPlan plan;
  plan.n_folds = n_folds;
  plan.runs_per_fold = runs_per_fold;
  const int base = n_patients / n_folds;
  const int rem = n_patients % n_folds;
  size_t offset = 0;
  for (int f = 0; f < n_folds; ++f) {
    const int len = base + (f < rem ? 1 : 0);
    plan.fold_patients.emplace_back(order.begin() + long(offset),
                                    order.begin() + long(offset) + len);
    plan.support_patient.push_back(plan.fold_patients.back().front());
    offset += size_t(len);
  }
  return plan;
}

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

namespace {

// Inclusive z-range of slices containing the class.
struct SliceRange {
  int first = -1;
  int last = -1;
  bool present() const { return first >= 0; }
  int len() const { return last - first + 1; }
};

SliceRange class_range(const LabelVolume& lv, uint32_t cls) {
  SliceRange r;
  const int64_t hw = int64_t(lv.dims[1]) * lv.dims[2];
  for (int z = 0; z < lv.dims[0]; ++z) {
    const uint32_t* row = &lv.labels[size_t(z * hw)];
    bool any = false;
    for (int64_t i = 0; i < hw && !any; ++i) any = row[i] == cls;
    if (any) {
      if (r.first < 0) r.first = z;
      r.last = z;
    }
  }
  return r;
}

// Nearest slice within [first, last] whose class mask is nonempty,
// preferring z itself, then smaller distance, then the lower index.
int nearest_nonempty_slice(const LabelVolume& lv, uint32_t cls,
                           const SliceRange& range, int z) {
  const int64_t hw = int64_t(lv.dims[1]) * lv.dims[2];
  auto nonempty = [&](int zz) {
    const uint32_t* row = &lv.labels[size_t(zz * hw)];
    for (int64_t i = 0; i < hw; ++i)
      if (row[i] == cls) return true;
    return false;
  };
  for (int d = 0; d <= range.len(); ++d) {
    if (z - d >= range.first && nonempty(z - d)) return z - d;
    if (z + d <= range.last && nonempty(z + d)) return z + d;
  }
  throw DataError("protocol: class absent from support range");
}

SupportSlice make_support(const Volume& vol, const LabelVolume& labels,
                          uint32_t cls, int z) {
  return {extract_slice(vol, z), class_mask_slice(labels, z, cls)};
}

Prediction background_prediction(int h, int w, float alpha) {
  Prediction p;
  p.height = h;
  p.width = w;
  const size_t hw = size_t(h) * size_t(w);
  p.mask.assign(hw, 0);
  p.fg_prob.assign(hw, 0.0f);
  // Maximal anomaly keeps these slices background under any threshold the
  // line search may try.
  p.scores.assign(hw, alpha);
  return p;
}

/// Chunk lengths: near-equal thirds, remainder to the earlier chunks.
std::array<int, 3> chunk_lengths(int len) {
  const int base = len / 3, rem = len % 3;
  return {base + (rem > 0 ? 1 : 0), base + (rem > 1 ? 1 : 0), base};
}

}  // namespace

std::vector<uint8_t> VolumePrediction::mask_volume() const {
  std::vector<uint8_t> out;
  for (const auto& p : slices)
    out.insert(out.end(), p.mask.begin(), p.mask.end());
  return out;
}

std::vector<uint8_t> VolumePrediction::mask_volume_at(float threshold) const {
  std::vector<uint8_t> out;
  for (const auto& p : slices)
    for (float s : p.scores) out.push_back(s < threshold ? 1 : 0);
  return out;
}

VolumePrediction ep1_infer(const Model<float>& m, const Volume& support_vol,
                           const LabelVolume& support_labels,
                           const Volume& query_vol,
                           const LabelVolume& query_weak_labels, uint32_t cls,
                           std::optional<float> t_override) {
  if (support_vol.dims != support_labels.dims ||
      query_vol.dims != query_weak_labels.dims)
    throw DataError("ep1: volume/label dims mismatch");
  const SliceRange sr = class_range(support_labels, cls);
  const SliceRange qr = class_range(query_weak_labels, cls);
  if (!sr.present() || !qr.present())
    throw DataError("ep1: class absent from support or query volume");

  const Model<float> eval_model = detached_model(m);
  const int H = query_vol.dims[1], W = query_vol.dims[2];
  const auto s_lens = chunk_lengths(sr.len());
  const auto q_lens = chunk_lengths(qr.len());

  VolumePrediction out;
  out.slices.resize(size_t(query_vol.dims[0]));
  for (int z = 0; z < query_vol.dims[0]; ++z)
    out.slices[size_t(z)] =
        background_prediction(H, W, float(eval_model.head.alpha));

  int s_off = sr.first, q_off = qr.first;
  for (int c = 0; c < 3; ++c) {
    const int slen = s_lens[size_t(c)], qlen = q_lens[size_t(c)];
    if (qlen > 0) {
      // Middle slice of the support sub-chunk; an empty chunk falls back to
      // the middle of the whole support range.
      int sz;
      if (slen > 0)
        sz = s_off + (slen - 1) / 2;
      else
        sz = sr.first + (sr.len() - 1) / 2;
      sz = nearest_nonempty_slice(support_labels, cls, sr, sz);
      const SupportSlice support = make_support(support_vol, support_labels, cls, sz);
      ++out.support_slices_used;
      for (int z = q_off; z < q_off + qlen; ++z)
        out.slices[size_t(z)] = infer_slice(eval_model, {support},
                                            extract_slice(query_vol, z), H, W,
                                            t_override);
    }
    s_off += slen;
    q_off += qlen;
  }
  return out;
}

VolumePrediction ep2_infer(const Model<float>& m, const Volume& support_vol,
                           const LabelVolume& support_labels,
                           const Volume& query_vol, uint32_t cls,
                           std::optional<float> t_override) {
  if (support_vol.dims != support_labels.dims)
    throw DataError("ep2: volume/label dims mismatch");
  if (query_vol.dims[1] != support_vol.dims[1] ||
      query_vol.dims[2] != support_vol.dims[2])
    throw DataError("ep2: query slice shape differs from support");
  const SliceRange sr = class_range(support_labels, cls);
  if (!sr.present()) throw DataError("ep2: class absent from support volume");

  const Model<float> eval_model = detached_model(m);
  const int H = query_vol.dims[1], W = query_vol.dims[2];
  int sz = (sr.first + sr.last) / 2;
  sz = nearest_nonempty_slice(support_labels, cls, sr, sz);
  const SupportSlice support = make_support(support_vol, support_labels, cls, sz);

  VolumePrediction out;
  out.support_slices_used = 1;
  out.slices.reserve(size_t(query_vol.dims[0]));
  for (int z = 0; z < query_vol.dims[0]; ++z)
    out.slices.push_back(infer_slice(eval_model, {support},
                                     extract_slice(query_vol, z), H, W,
                                     t_override));
  return out;
}

double score_prediction(const VolumePrediction& pred,
                        const LabelVolume& query_labels, uint32_t cls) {
  return dice(pred.mask_volume(), class_mask_volume(query_labels, cls));
}

// ---------------------------------------------------------------------------
// aggregation and files
// ---------------------------------------------------------------------------

namespace {

ClassStats stats_of(const std::vector<double>& values) {
  ClassStats s;
  s.n = int64_t(values.size());
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  double var = 0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(var / double(values.size()));
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Aggregate aggregate(const std::vector<EvalEntry>& entries) {
  if (entries.empty()) throw DataError("aggregate: no entries");
  Aggregate agg;
  std::map<uint32_t, std::vector<double>> by_class;
  std::vector<double> all;
  for (const auto& e : entries) {
    by_class[e.cls].push_back(e.dice);
    all.push_back(e.dice);
  }
  for (auto& [cls, values] : by_class) agg.per_class[cls] = stats_of(values);
  agg.overall = stats_of(all);
  return agg;
}

void write_results_csv(const std::vector<EvalEntry>& entries,
                       const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "protocol,fold,run,class,query_id,dice\n";
  for (const auto& e : entries)
    f << e.protocol << "," << e.fold << "," << e.run << "," << e.cls << ","
      << e.query_id << "," << fmt(e.dice) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

void write_summary_json(const Aggregate& agg, const std::string& path) {
  nlohmann::json j;
  for (const auto& [cls, s] : agg.per_class) {
    auto& e = j["classes"][std::to_string(cls)];
    e["mean"] = s.mean;
    e["std"] = s.stddev;
    e["n"] = s.n;
  }
  j["overall"]["mean"] = agg.overall.mean;
  j["overall"]["std"] = agg.overall.stddev;
  j["overall"]["n"] = agg.overall.n;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// line search
// ---------------------------------------------------------------------------

LineSearchResult threshold_line_search(const Model<float>& m,
                                       const std::vector<EvalTask>& tasks,
                                       const std::string& protocol,
                                       double t_min, double t_max,
                                       double t_step) {
  if (tasks.empty()) throw DataError("line search: no tasks");
  if (t_step <= 0) throw ConfigError("line search: step must be > 0");
  if (t_min > t_max) throw DataError("line search: empty threshold range");
  if (protocol != "EP1" && protocol != "EP2")
    throw ConfigError("line search: unknown protocol " + protocol);

  // Score maps do not depend on T; infer once per task and re-threshold.
  std::vector<VolumePrediction> preds;
  std::vector<std::vector<uint8_t>> truths;
  for (const auto& task : tasks) {
    if (protocol == "EP1")
      preds.push_back(ep1_infer(m, *task.support_vol, *task.support_labels,
                                *task.query_vol, *task.query_labels, task.cls));
    else
      preds.push_back(ep2_infer(m, *task.support_vol, *task.support_labels,
                                *task.query_vol, task.cls));
    truths.push_back(class_mask_volume(*task.query_labels, task.cls));
  }

  auto eval_at = [&](float t, std::vector<double>& dices) {
    for (size_t i = 0; i < preds.size(); ++i)
      dices.push_back(dice(preds[i].mask_volume_at(t), truths[i]));
  };

  LineSearchResult r;
  for (double t = t_min; t <= t_max + 1e-9; t += t_step) {
    std::vector<double> dices;
    eval_at(float(t), dices);
    const ClassStats s = stats_of(dices);
    r.thresholds.push_back(t);
    r.mean_dice.push_back(s.mean);
    r.std_dice.push_back(s.stddev);
  }
  r.learned_t = double(m.head.threshold());
  {
    std::vector<double> dices;
    eval_at(m.head.threshold(), dices);
    r.learned_mean_dice = stats_of(dices).mean;
  }
  return r;
}

void write_linesearch_csv(const LineSearchResult& r, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "threshold,mean_dice,std_dice\n";
  for (size_t i = 0; i < r.thresholds.size(); ++i)
    f << fmt(r.thresholds[i]) << "," << fmt(r.mean_dice[i]) << ","
      << fmt(r.std_dice[i]) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace adnet
