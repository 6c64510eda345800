#include "adnet/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "json.hpp"

namespace fs = std::filesystem;

namespace adnet {

namespace {

int64_t resolve_rho(const SupervoxelParams& p, int64_t num_voxels) {
  return p.rho > 0 ? p.rho : std::max<int64_t>(1, num_voxels / 200);
}

// Runs body(0..n-1) on a worker pool; exceptions resurface on the caller.
void parallel_for(int64_t n, int threads,
                  const std::function<void(int64_t)>& body) {
  int t = threads > 0 ? threads : int(std::thread::hardware_concurrency());
  t = int(std::clamp<int64_t>(t, 1, n));
  if (t <= 1) {
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int64_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(t));
  std::vector<std::thread> workers;
  workers.reserve(size_t(t));
  for (int w = 0; w < t; ++w)
    workers.emplace_back([&, w] {
      try {
        for (int64_t i; (i = next.fetch_add(1)) < n;) body(i);
      } catch (...) {
        errors[size_t(w)] = std::current_exception();
      }
    });
  for (auto& th : workers) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int64_t count_labels(const LabelVolume& lv) {
  uint32_t mx = 0;
  for (uint32_t l : lv.labels) mx = std::max(mx, l);
  return int64_t(mx);
}

uint64_t arm_base_seed(const ExperimentConfig& cfg, int fold, int run) {
  return mix_seed(cfg.seed, uint64_t(fold), uint64_t(run));
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// dataset storage
// ---------------------------------------------------------------------------

void StoredDataset::validate() const {
  const size_t n = images.size();
  if (ids.size() != n || class_labels.size() != n)
    throw DataError("dataset: ids/images/labels size mismatch");
  if (!supervoxels.empty() && supervoxels.size() != n)
    throw DataError("dataset: supervoxel count mismatch");
  if (num_classes < 0) throw DataError("dataset: negative class count");
  for (size_t i = 0; i < n; ++i) {
    images[i].validate();
    if (class_labels[i].dims != images[i].dims)
      throw DataError("dataset: label dims mismatch for " + ids[i]);
    if (!supervoxels.empty() && supervoxels[i].dims != images[i].dims)
      throw DataError("dataset: supervoxel dims mismatch for " + ids[i]);
  }
}

StoredDataset build_synthetic_dataset(const SyntheticSpec& spec) {
  StoredDataset ds;
  ds.num_classes = int(spec.classes.size());
  auto volumes = generate_synthetic_dataset(spec);
  ds.ids.reserve(volumes.size());
  for (size_t i = 0; i < volumes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "vol%03zu", i);
    ds.ids.emplace_back(name);
    ds.images.push_back(std::move(volumes[i].first));
    ds.class_labels.push_back(std::move(volumes[i].second));
  }
  return ds;
}

void save_dataset(const StoredDataset& ds, const std::string& dir) {
  ds.validate();
  fs::create_directories(dir);
  for (size_t i = 0; i < ds.images.size(); ++i) {
    const std::string base = (fs::path(dir) / ds.ids[i]).string();
    save_volume(ds.images[i], base);
    save_labels(ds.class_labels[i], base + "_labels");
    if (!ds.supervoxels.empty()) save_labels(ds.supervoxels[i], base + "_svox");
  }
  nlohmann::json j;
  j["ids"] = ds.ids;
  j["num_classes"] = ds.num_classes;
  j["has_supervoxels"] = !ds.supervoxels.empty();
  std::ofstream f(fs::path(dir) / "dataset.json", std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + dir + "/dataset.json");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + dir + "/dataset.json");
}

StoredDataset load_dataset(const std::string& dir) {
  const std::string manifest = (fs::path(dir) / "dataset.json").string();
  std::ifstream f(manifest);
  if (!f) throw IoError("cannot open dataset manifest: " + manifest);
  nlohmann::json j;
  try {
    f >> j;
    StoredDataset ds;
    j.at("ids").get_to(ds.ids);
    j.at("num_classes").get_to(ds.num_classes);
    const bool svox = j.value("has_supervoxels", false);
    for (const auto& id : ds.ids) {
      const std::string base = (fs::path(dir) / id).string();
      ds.images.push_back(load_volume(base));
      ds.class_labels.push_back(load_labels(base + "_labels"));
      if (svox) ds.supervoxels.push_back(load_labels(base + "_svox"));
    }
    ds.validate();
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad dataset manifest " + manifest + ": " + e.what());
  }
}

std::vector<int64_t> compute_supervoxels(StoredDataset& ds,
                                         const SupervoxelParams& params,
                                         int threads) {
  ds.validate();
  const int n = ds.size();
  ds.supervoxels.assign(size_t(n), LabelVolume{});
  std::vector<int64_t> counts(size_t(n), 0);
  parallel_for(n, threads, [&](int64_t i) {
    SupervoxelParams p = params;
    p.rho = resolve_rho(params, ds.images[size_t(i)].num_voxels());
    p.validate();
    ds.supervoxels[size_t(i)] = generate_supervoxels(ds.images[size_t(i)], p);
    counts[size_t(i)] = count_labels(ds.supervoxels[size_t(i)]);
  });
  return counts;
}

void write_supervoxel_manifest(const SupervoxelParams& params,
                               const std::vector<std::string>& ids,
                               const std::vector<int64_t>& counts,
                               const std::string& path) {
  if (ids.size() != counts.size())
    throw DataError("supervoxel manifest: ids/counts size mismatch");
  nlohmann::json j;
  j["params"]["rho"] = params.rho;
  j["params"]["scale_k"] = params.scale_k;
  j["params"]["presmooth_sigma"] = params.presmooth_sigma;
  j["volumes"] = nlohmann::json::array();
  for (size_t i = 0; i < ids.size(); ++i)
    j["volumes"].push_back({{"id", ids[i]}, {"supervoxels", counts[i]}});
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed: " + path);
}

StoredDataset obtain_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_path) return load_dataset(*cfg.dataset_path);
  return build_synthetic_dataset(cfg.synthetic);
}

// ---------------------------------------------------------------------------
// cross-validated experiment
// ---------------------------------------------------------------------------

std::vector<TrainingVolume> training_pool(const StoredDataset& ds,
                                          const SplitPlan& plan, int fold) {
  if (ds.supervoxels.empty())
    throw DataError("training pool: dataset has no supervoxels");
  std::vector<TrainingVolume> pool;
  for (int p = 0; p < ds.size(); ++p)
    if (plan.fold_of(p) != fold)
      pool.push_back({ds.ids[size_t(p)], &ds.images[size_t(p)],
                      &ds.supervoxels[size_t(p)]});
  if (pool.empty()) throw DataError("training pool: no out-of-fold patients");
  return pool;
}

TrainSettings arm_settings(const ExperimentConfig& cfg, int fold, int run) {
  TrainSettings s;
  s.iterations = cfg.iterations;
  s.sgd = cfg.sgd;
  s.toggles = cfg.loss;
  s.w_fg = cfg.w_fg;
  s.w_bg = cfg.w_bg;
  s.init_seed = mix_seed(arm_base_seed(cfg, fold, run), 1);
  return s;
}

SamplerConfig arm_sampler(const ExperimentConfig& cfg, int fold, int run) {
  SamplerConfig sc = cfg.sampler;
  sc.seed = mix_seed(mix_seed(arm_base_seed(cfg, fold, run), 2), cfg.sampler.seed);
  return sc;
}

TrainOutcome train_full(const ExperimentConfig& cfg, StoredDataset& ds,
                        int threads) {
  cfg.validate();
  ds.validate();
  if (ds.supervoxels.empty()) compute_supervoxels(ds, cfg.supervoxel, threads);
  std::vector<TrainingVolume> pool;
  for (int p = 0; p < ds.size(); ++p)
    pool.push_back({ds.ids[size_t(p)], &ds.images[size_t(p)],
                    &ds.supervoxels[size_t(p)]});
  return train_model(cfg.encoder, cfg.head, arm_settings(cfg, -1, 0),
                     arm_sampler(cfg, -1, 0), cfg.transforms, pool);
}

std::vector<EvalEntry> evaluate_fold(const Model<float>& m,
                                     const ExperimentConfig& cfg,
                                     const StoredDataset& ds,
                                     const SplitPlan& plan, int fold, int run) {
  std::vector<EvalEntry> out;
  const int s = plan.support_patient[size_t(fold)];
  for (uint32_t cls = 1; cls <= uint32_t(ds.num_classes); ++cls) {
    for (int q : plan.fold_patients[size_t(fold)]) {
      if (q == s) continue;
      VolumePrediction pred =
          cfg.protocol == "EP1"
              ? ep1_infer(m, ds.images[size_t(s)], ds.class_labels[size_t(s)],
                          ds.images[size_t(q)], ds.class_labels[size_t(q)], cls)
              : ep2_infer(m, ds.images[size_t(s)], ds.class_labels[size_t(s)],
                          ds.images[size_t(q)], cls);
      out.push_back({cfg.protocol, fold, run, cls, ds.ids[size_t(q)],
                     score_prediction(pred, ds.class_labels[size_t(q)], cls)});
    }
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, StoredDataset& ds,
                                const std::string& out_dir, int threads) {
  cfg.validate();
  ds.validate();
  fs::create_directories(out_dir);
  save_experiment_config(cfg, (fs::path(out_dir) / "config.json").string());
  if (ds.supervoxels.empty()) {
    auto counts = compute_supervoxels(ds, cfg.supervoxel, threads);
    write_supervoxel_manifest(cfg.supervoxel, ds.ids, counts,
                              (fs::path(out_dir) / "supervoxels.json").string());
  }
  const SplitPlan plan = make_cv_splits(ds.size(), cfg.n_folds, cfg.split_seed,
                                        cfg.runs_per_fold);

  struct Arm {
    int fold, run;
  };
  std::vector<Arm> arms;
  for (int f = 0; f < plan.n_folds; ++f)
    for (int r = 0; r < plan.runs_per_fold; ++r) arms.push_back({f, r});

  std::vector<std::vector<EvalEntry>> slots(arms.size());
  parallel_for(int64_t(arms.size()), threads, [&](int64_t i) {
    const Arm arm = arms[size_t(i)];
    const auto pool = training_pool(ds, plan, arm.fold);
    TrainOutcome trained =
        train_model(cfg.encoder, cfg.head, arm_settings(cfg, arm.fold, arm.run),
                    arm_sampler(cfg, arm.fold, arm.run), cfg.transforms, pool);
    const std::string stem =
        (fs::path(out_dir) / ("fold" + std::to_string(arm.fold) + "_run" +
                              std::to_string(arm.run)))
            .string();
    save_model(trained.model, stem + ".ckpt");
    write_train_log(trained.log, stem + "_log.jsonl");
    slots[size_t(i)] = evaluate_fold(trained.model, cfg, ds, plan, arm.fold, arm.run);
  });

  ExperimentResult result;
  result.plan = plan;
  for (auto& slot : slots)
    result.entries.insert(result.entries.end(), slot.begin(), slot.end());
  result.agg = aggregate(result.entries);
  write_results_csv(result.entries, (fs::path(out_dir) / "results.csv").string());
  write_summary_json(result.agg, (fs::path(out_dir) / "summary.json").string());
  return result;
}

ExperimentResult evaluate_model(const Model<float>& m,
                                const ExperimentConfig& cfg,
                                const StoredDataset& ds,
                                const std::string& out_dir) {
  cfg.validate();
  ds.validate();
  fs::create_directories(out_dir);
  save_experiment_config(cfg, (fs::path(out_dir) / "config.json").string());
  const SplitPlan plan = make_cv_splits(ds.size(), cfg.n_folds, cfg.split_seed,
                                        cfg.runs_per_fold);
  ExperimentResult result;
  result.plan = plan;
  for (int f = 0; f < plan.n_folds; ++f) {
    auto fold_entries = evaluate_fold(m, cfg, ds, plan, f, 0);
    result.entries.insert(result.entries.end(), fold_entries.begin(),
                          fold_entries.end());
  }
  result.agg = aggregate(result.entries);
  write_results_csv(result.entries, (fs::path(out_dir) / "results.csv").string());
  write_summary_json(result.agg, (fs::path(out_dir) / "summary.json").string());
  return result;
}

std::vector<EvalTask> make_eval_tasks(const StoredDataset& ds,
                                      const SplitPlan& plan) {
  std::vector<EvalTask> tasks;
  for (int f = 0; f < plan.n_folds; ++f) {
    const int s = plan.support_patient[size_t(f)];
    for (uint32_t cls = 1; cls <= uint32_t(ds.num_classes); ++cls)
      for (int q : plan.fold_patients[size_t(f)]) {
        if (q == s) continue;
        tasks.push_back({&ds.images[size_t(s)], &ds.class_labels[size_t(s)],
                         &ds.images[size_t(q)], &ds.class_labels[size_t(q)],
                         cls});
      }
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// parameter sweeps
// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep_parameter(const ExperimentConfig& base,
                                      const std::string& parameter,
                                      const std::vector<double>& values,
                                      const StoredDataset& base_ds,
                                      const std::string& out_dir, int threads) {
  if (values.empty()) throw ConfigError("sweep: empty values list");
  if (parameter != "rho" && parameter != "kappa")
    throw ConfigError("sweep: parameter must be rho or kappa");
  base.validate();
  base_ds.validate();
  fs::create_directories(out_dir);

  // Kappa arms retrain only, so they share one set of supervoxels.
  StoredDataset shared;
  std::string shared_manifest;
  if (parameter == "kappa") {
    shared = base_ds;
    std::vector<int64_t> counts;
    if (shared.supervoxels.empty()) {
      counts = compute_supervoxels(shared, base.supervoxel, threads);
    } else {
      for (const auto& lv : shared.supervoxels)
        counts.push_back(count_labels(lv));
    }
    shared_manifest = (fs::path(out_dir) / "supervoxels.json").string();
    write_supervoxel_manifest(base.supervoxel, shared.ids, counts,
                              shared_manifest);
  }

  std::vector<SweepRow> rows;
  for (size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    ExperimentConfig cfg = base;
    const std::string arm_dir =
        (fs::path(out_dir) / (parameter + "_" + std::to_string(i))).string();
    SweepRow row;
    row.value = v;
    row.arm_dir = arm_dir;
    if (parameter == "rho") {
      if (v < 1 || v != std::floor(v))
        throw ConfigError("sweep: rho values must be positive integers");
      cfg.supervoxel.rho = int64_t(v);
      StoredDataset ds = base_ds;
      ds.supervoxels.clear();
      row.agg = run_experiment(cfg, ds, arm_dir, threads).agg;
      row.supervoxel_manifest =
          (fs::path(arm_dir) / "supervoxels.json").string();
    } else {
      if (v <= 0) throw ConfigError("sweep: kappa values must be > 0");
      cfg.head.kappa = v;
      StoredDataset ds = shared;
      row.agg = run_experiment(cfg, ds, arm_dir, threads).agg;
      row.supervoxel_manifest = shared_manifest;
    }
    rows.push_back(std::move(row));
  }
  write_sweep_csv(rows, parameter, base_ds.num_classes,
                  (fs::path(out_dir) / "sweep.csv").string());
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& parameter, int num_classes,
                     const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << parameter;
  for (int c = 1; c <= num_classes; ++c) f << ",class" << c;
  f << ",mean,std,supervoxels\n";
  for (const auto& row : rows) {
    char vbuf[64];
    std::snprintf(vbuf, sizeof(vbuf), "%g", row.value);
    f << vbuf;
    for (int c = 1; c <= num_classes; ++c) {
      auto it = row.agg.per_class.find(uint32_t(c));
      f << "," << (it == row.agg.per_class.end() ? std::string("nan")
                                                 : fmt6(it->second.mean));
    }
    f << "," << fmt6(row.agg.overall.mean) << "," << fmt6(row.agg.overall.stddev)
      << "," << row.supervoxel_manifest << "\n";
  }
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace adnet
