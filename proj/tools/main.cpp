// Command-line front end: synth | supervoxel | train | eval | sweep |
// linesearch. Every command resolves its config, runs the corresponding
// pipeline, and persists the resolved config next to its outputs. Errors
// leave one JSON line on stderr and a category-specific exit code.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "adnet/experiment.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace adnet;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::optional<uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool out_required = true) {
  cmd->add_option("--config", o.config_path, "experiment config (JSON)");
  auto* out = cmd->add_option("--out", o.out_dir, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seed", o.seed,
                  "override the master seed (and the synthetic dataset seed)");
  cmd->add_option("--threads", o.threads, "worker threads, 0 = all cores");
}

ExperimentConfig resolve_config(const CommonOpts& o) {
  ExperimentConfig cfg = o.config_path.empty()
                             ? ExperimentConfig{}
                             : load_experiment_config(o.config_path);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.synthetic.seed = *o.seed;
  }
  cfg.validate();
  return cfg;
}

void run_parallel(size_t n, int threads, const std::function<void(size_t)>& body) {
  size_t t = threads > 0 ? size_t(threads) : std::thread::hardware_concurrency();
  t = std::clamp<size_t>(t, 1, n == 0 ? 1 : n);
  if (t <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::exception_ptr> errors(t);
  std::vector<std::thread> workers;
  for (size_t w = 0; w < t; ++w)
    workers.emplace_back([&, w] {
      try {
        for (size_t i; (i = next.fetch_add(1)) < n;) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& th : workers) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void print_aggregate(const Aggregate& agg) {
  for (const auto& [cls, s] : agg.per_class)
    std::cout << "class " << cls << ": mean " << fmt3(s.mean) << " std "
              << fmt3(s.stddev) << " (n=" << s.n << ")\n";
  std::cout << "overall: mean " << fmt3(agg.overall.mean) << " std "
            << fmt3(agg.overall.stddev) << " (n=" << agg.overall.n << ")\n";
}

// Volume bases in a directory: every <base>.rvf.json that is not itself a
// label or supervoxel file.
std::vector<std::string> list_volume_bases(const std::string& dir) {
  const std::string suffix = ".rvf.json";
  std::vector<std::string> bases;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
    std::string base = name.substr(0, name.size() - suffix.size());
    if (base.ends_with("_labels") || base.ends_with("_svox")) continue;
    bases.push_back(std::move(base));
  }
  std::sort(bases.begin(), bases.end());
  return bases;
}

int cmd_synth(const CommonOpts& o) {
  const ExperimentConfig cfg = resolve_config(o);
  StoredDataset ds = build_synthetic_dataset(cfg.synthetic);
  save_dataset(ds, o.out_dir);
  save_experiment_config(cfg, (fs::path(o.out_dir) / "config.json").string());
  std::cout << "dataset: " << ds.size() << " volumes -> " << o.out_dir << "\n";
  return 0;
}

int cmd_supervoxel(const CommonOpts& o, const std::string& input_dir) {
  const ExperimentConfig cfg = resolve_config(o);
  if (!fs::is_directory(input_dir))
    throw IoError("input is not a directory: " + input_dir);
  fs::create_directories(o.out_dir);
  const auto bases = list_volume_bases(input_dir);
  std::vector<int64_t> counts(bases.size(), 0);
  run_parallel(bases.size(), o.threads, [&](size_t i) {
    const Volume v = load_volume((fs::path(input_dir) / bases[i]).string());
    SupervoxelParams p = cfg.supervoxel;
    p.rho = cfg.resolved_rho(v.num_voxels());
    p.validate();
    const LabelVolume sv = generate_supervoxels(v, p);
    save_labels(sv, (fs::path(o.out_dir) / (bases[i] + "_svox")).string());
    uint32_t mx = 0;
    for (uint32_t l : sv.labels) mx = std::max(mx, l);
    counts[i] = int64_t(mx);
  });
  write_supervoxel_manifest(cfg.supervoxel, bases, counts,
                            (fs::path(o.out_dir) / "supervoxels.json").string());
  std::cout << "supervoxels: " << bases.size() << " volumes -> " << o.out_dir
            << "\n";
  return 0;
}

int cmd_train(const CommonOpts& o) {
  const ExperimentConfig cfg = resolve_config(o);
  StoredDataset ds = obtain_dataset(cfg);
  fs::create_directories(o.out_dir);
  save_experiment_config(cfg, (fs::path(o.out_dir) / "config.json").string());
  if (ds.supervoxels.empty()) {
    auto counts = compute_supervoxels(ds, cfg.supervoxel, o.threads);
    write_supervoxel_manifest(cfg.supervoxel, ds.ids, counts,
                              (fs::path(o.out_dir) / "supervoxels.json").string());
  }
  TrainOutcome out = train_full(cfg, ds, o.threads);
  save_model(out.model, (fs::path(o.out_dir) / "model.ckpt").string());
  write_train_log(out.log, (fs::path(o.out_dir) / "train_log.jsonl").string());
  const double t = out.model.head.threshold();
  std::cout << "trained " << cfg.iterations << " iterations, T = " << fmt3(t)
            << " -> " << o.out_dir << "\n";
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint) {
  const ExperimentConfig cfg = resolve_config(o);
  StoredDataset ds = obtain_dataset(cfg);
  ExperimentResult result;
  if (checkpoint.empty()) {
    result = run_experiment(cfg, ds, o.out_dir, o.threads);
  } else {
    const Model<float> m = load_model(checkpoint);
    result = evaluate_model(m, cfg, ds, o.out_dir);
  }
  print_aggregate(result.agg);
  std::cout << "results: " << (fs::path(o.out_dir) / "results.csv").string()
            << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& parameter,
              const std::vector<double>& values) {
  const ExperimentConfig cfg = resolve_config(o);
  const StoredDataset ds = obtain_dataset(cfg);
  const auto rows = sweep_parameter(cfg, parameter, values, ds, o.out_dir,
                                    o.threads);
  for (const auto& row : rows)
    std::cout << parameter << " = " << row.value << ": mean "
              << fmt3(row.agg.overall.mean) << " std "
              << fmt3(row.agg.overall.stddev) << "\n";
  std::cout << "table: " << (fs::path(o.out_dir) / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_linesearch(const CommonOpts& o, const std::string& checkpoint,
                   double t_min, double t_max, double t_step) {
  const ExperimentConfig cfg = resolve_config(o);
  const StoredDataset ds = obtain_dataset(cfg);
  const Model<float> m = load_model(checkpoint);
  const SplitPlan plan = make_cv_splits(ds.size(), cfg.n_folds, cfg.split_seed,
                                        cfg.runs_per_fold);
  const auto tasks = make_eval_tasks(ds, plan);
  const LineSearchResult r =
      threshold_line_search(m, tasks, cfg.protocol, t_min, t_max, t_step);
  fs::create_directories(o.out_dir);
  save_experiment_config(cfg, (fs::path(o.out_dir) / "config.json").string());
  write_linesearch_csv(r, (fs::path(o.out_dir) / "linesearch.csv").string());
  const double grid_max =
      *std::max_element(r.mean_dice.begin(), r.mean_dice.end());
  std::cout << "learned T = " << fmt3(r.learned_t) << ", dice "
            << fmt3(r.learned_mean_dice) << " (grid max " << fmt3(grid_max)
            << ")\n";
  std::cout << "curve: " << (fs::path(o.out_dir) / "linesearch.csv").string()
            << "\n";
  return 0;
}

int report(const char* category, const std::string& message, int code) {
  nlohmann::json j;
  j["error"]["category"] = category;
  j["error"]["message"] = message;
  std::cerr << j.dump() << std::endl;
  return code;
}

int run(int argc, char** argv) {
  CLI::App app{"few-shot anomaly-detection segmentation experiments"};
  app.require_subcommand(1);

  int rc = 0;

  CommonOpts synth_o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth, synth_o);
  synth->callback([&] { rc = cmd_synth(synth_o); });

  CommonOpts svox_o;
  std::string svox_input;
  auto* svox =
      app.add_subcommand("supervoxel", "compute supervoxel pseudo-labels");
  add_common(svox, svox_o);
  svox->add_option("--input", svox_input, "directory of RVF volumes")
      ->required();
  svox->callback([&] { rc = cmd_supervoxel(svox_o, svox_input); });

  CommonOpts train_o;
  auto* train = app.add_subcommand("train", "train one model on the dataset");
  add_common(train, train_o);
  train->callback([&] { rc = cmd_train(train_o); });

  CommonOpts eval_o;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand(
      "eval", "cross-validated evaluation (trains per fold unless --checkpoint)");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", eval_ckpt, "evaluate this model instead");
  eval->callback([&] { rc = cmd_eval(eval_o, eval_ckpt); });

  CommonOpts sweep_o;
  std::string sweep_param;
  std::vector<double> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "sensitivity sweep over rho or kappa");
  add_common(sweep, sweep_o);
  sweep->add_option("--parameter", sweep_param, "rho or kappa")->required();
  sweep->add_option("--values", sweep_values, "parameter values")
      ->required()
      ->delimiter(',');
  sweep->callback([&] { rc = cmd_sweep(sweep_o, sweep_param, sweep_values); });

  CommonOpts ls_o;
  std::string ls_ckpt;
  double t_min = -20.0, t_max = -5.0, t_step = 0.5;
  auto* ls = app.add_subcommand("linesearch", "threshold line search");
  add_common(ls, ls_o);
  ls->add_option("--checkpoint", ls_ckpt, "trained model")->required();
  ls->add_option("--t-min", t_min, "grid start");
  ls->add_option("--t-max", t_max, "grid end");
  ls->add_option("--t-step", t_step, "grid step");
  ls->callback([&] { rc = cmd_linesearch(ls_o, ls_ckpt, t_min, t_max, t_step); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 2);
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    return report("config", e.what(), 2);
  } catch (const IoError& e) {
    return report("io", e.what(), 3);
  } catch (const DataError& e) {
    return report("data", e.what(), 4);
  } catch (const std::exception& e) {
    return report("internal", e.what(), 1);
  }
}
